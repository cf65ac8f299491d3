"""Readers and writers for the pipeline's on-disk formats.

Parsers stream line by line and never hold the file in memory. They also
never drop a data row silently: every skipped row is itemized by reason
and line number in a parse report, so

    rows parsed + rows skipped == data rows in the file

always holds. Variant identity is the VCF ID column when present; rows
with ID "." fall back to a ``chrom:pos:ref:alt`` key, so positional ids in
panels and weight tables still match.

Text is UTF-8; both LF and CRLF line endings are accepted. Writers emit LF
only, so output bytes are identical across platforms.
"""

from __future__ import annotations

import csv
import logging
from contextlib import contextmanager
from dataclasses import dataclass
from io import TextIOBase, TextIOWrapper
from pathlib import Path
from typing import IO, Iterator

import numpy as np

from .errors import (
    DuplicateSample,
    DuplicateVariant,
    EmptyPanel,
    MalformedRow,
    NegativeBmi,
    NonNumericWeight,
    ParseAbort,
    UnknownSexToken,
)
from .evaluation import CohortReport, ReportRow
from .genotypes import (
    GenotypeMatrix,
    PanelDefinition,
    SampleRecord,
    ScoreWeightTable,
    Variant,
    WeightRow,
    OBESITY_BMI_THRESHOLD,
    _ALLELE_RE,
)

logger = logging.getLogger(__name__)

Source = str | Path | IO

# Reasons a VCF data row can be skipped without aborting the parse.
SKIP_MULTI_ALLELIC = "multi_allelic"
SKIP_UNSUPPORTED_ALLELES = "unsupported_alleles"
SKIP_DUPLICATE_VARIANT = "duplicate_variant_id"

_VCF_FIXED_COLUMNS = ("#CHROM", "POS", "ID", "REF", "ALT", "QUAL", "FILTER", "INFO", "FORMAT")
_WEIGHTS_HEADER = ("variant_id", "effect_allele", "other_allele", "weight")
_PHENOTYPES_HEADER = ("sample_id", "population", "sex", "bmi")

# Hard genotype calls. Dosage counts alt alleles; phasing is irrelevant here.
_GT_DOSAGE = {
    "0/0": 0.0, "0|0": 0.0,
    "0/1": 1.0, "0|1": 1.0, "1/0": 1.0, "1|0": 1.0,
    "1/1": 2.0, "1|1": 2.0,
}
_GT_MISSING = ("./.", ".|.")


@contextmanager
def _text_source(source: Source) -> Iterator[IO]:
    """Yield a text stream for a path, text stream or byte stream."""
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as handle:
            yield handle
    elif isinstance(source, TextIOBase) or hasattr(source, "encoding"):
        yield source
    else:
        # Byte stream: wrap without closing the caller's handle.
        wrapper = TextIOWrapper(source, encoding="utf-8")
        try:
            yield wrapper
        finally:
            wrapper.detach()


@contextmanager
def _text_dest(dest: Source) -> Iterator[IO]:
    if isinstance(dest, (str, Path)):
        with open(dest, "w", encoding="utf-8", newline="\n") as handle:
            yield handle
    else:
        yield dest


def _data_lines(stream: IO) -> Iterator[tuple[int, str]]:
    """Yield (1-based line number, line without trailing newline)."""
    for line_no, raw in enumerate(stream, start=1):
        yield line_no, raw.rstrip("\r\n")


# ---------------------------------------------------------------------------
# VCF subset
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VcfParseReport:
    """Accounting of one VCF parse: nothing is dropped off the books."""

    sample_names: tuple[str, ...]
    rows_total: int
    rows_parsed: int
    skipped: dict[str, tuple[int, ...]]  # reason -> 1-based line numbers

    @property
    def rows_skipped(self) -> int:
        return sum(len(lines) for lines in self.skipped.values())


def parse_vcf(source: Source) -> tuple[GenotypeMatrix, VcfParseReport]:
    """Parse a biallelic VCF subset into a dosage matrix.

    Supports the fields the pipeline needs: a ``#CHROM`` header with at
    least one sample column, GT as the first FORMAT key, and an optional
    DS (dosage) key that overrides GT counting when declared. ``./.`` and
    ``.|.`` genotypes become missing entries. Multi-allelic rows, rows
    with non-ACGT alleles and rows repeating an already-seen variant id
    are skipped and itemized in the report.

    Parameters
    ----------
    source : path or stream
        VCF text. Byte streams are decoded as UTF-8.

    Returns
    -------
    (GenotypeMatrix, VcfParseReport)

    Raises
    ------
    ParseAbort
        If the header line is absent, malformed or has duplicate samples.
    MalformedRow
        If a data row has the wrong column count or an undecodable field.
    """
    with _text_source(source) as stream:
        sample_names: tuple[str, ...] | None = None
        columns: list[np.ndarray] = []
        masks: list[np.ndarray] = []
        variants: list[Variant] = []
        seen_ids: set[str] = set()
        skipped: dict[str, list[int]] = {}
        rows_total = 0

        for line_no, line in _data_lines(stream):
            if not line:
                continue
            if line.startswith("##"):
                continue
            if line.startswith("#"):
                if sample_names is not None:
                    raise ParseAbort(f"line {line_no}: second header line")
                fields = line.split("\t")
                if tuple(fields[: len(_VCF_FIXED_COLUMNS)]) != _VCF_FIXED_COLUMNS:
                    raise ParseAbort(
                        f"line {line_no}: header must start with "
                        + "\t".join(_VCF_FIXED_COLUMNS)
                    )
                names = fields[len(_VCF_FIXED_COLUMNS):]
                if not names:
                    raise ParseAbort(f"line {line_no}: header has no sample columns")
                if len(set(names)) != len(names):
                    raise ParseAbort(f"line {line_no}: duplicate sample names in header")
                sample_names = tuple(names)
                continue
            if sample_names is None:
                raise ParseAbort(f"line {line_no}: data row before #CHROM header")

            rows_total += 1
            fields = line.split("\t")
            if len(fields) != len(_VCF_FIXED_COLUMNS) + len(sample_names):
                raise MalformedRow(
                    line_no,
                    f"expected {len(_VCF_FIXED_COLUMNS) + len(sample_names)} columns, "
                    f"got {len(fields)}",
                )
            chrom, pos_text, vid, ref, alt = fields[0], fields[1], fields[2], fields[3], fields[4]
            fmt = fields[8]

            if "," in alt:
                skipped.setdefault(SKIP_MULTI_ALLELIC, []).append(line_no)
                continue
            if not _ALLELE_RE.match(ref) or not _ALLELE_RE.match(alt) or ref == alt:
                skipped.setdefault(SKIP_UNSUPPORTED_ALLELES, []).append(line_no)
                continue
            try:
                pos = int(pos_text)
            except ValueError:
                raise MalformedRow(line_no, f"POS {pos_text!r} is not an integer") from None
            if vid == "." or not vid:
                vid = f"{chrom}:{pos}:{ref}:{alt}"
            if vid in seen_ids:
                skipped.setdefault(SKIP_DUPLICATE_VARIANT, []).append(line_no)
                continue

            fmt_keys = fmt.split(":")
            if not fmt_keys or fmt_keys[0] != "GT":
                raise MalformedRow(line_no, f"FORMAT {fmt!r} must start with GT")
            ds_index = fmt_keys.index("DS") if "DS" in fmt_keys else None

            dose = np.empty(len(sample_names), dtype=np.float64)
            miss = np.zeros(len(sample_names), dtype=bool)
            for i, entry in enumerate(fields[len(_VCF_FIXED_COLUMNS):]):
                subfields = entry.split(":")
                value: float | None
                if ds_index is not None and ds_index < len(subfields):
                    token = subfields[ds_index]
                    if token == ".":
                        value = None
                    else:
                        try:
                            value = float(token)
                        except ValueError:
                            raise MalformedRow(
                                line_no, f"sample {sample_names[i]}: bad DS {token!r}"
                            ) from None
                        if not (0.0 <= value <= 2.0):
                            raise MalformedRow(
                                line_no,
                                f"sample {sample_names[i]}: DS {token} outside [0, 2]",
                            )
                else:
                    gt = subfields[0]
                    if gt in _GT_MISSING:
                        value = None
                    else:
                        value = _GT_DOSAGE.get(gt)
                        if value is None:
                            raise MalformedRow(
                                line_no, f"sample {sample_names[i]}: bad GT {gt!r}"
                            )
                if value is None:
                    dose[i] = 0.0
                    miss[i] = True
                else:
                    dose[i] = value
            seen_ids.add(vid)
            variants.append(Variant(vid, chrom, pos, ref, alt))
            columns.append(dose)
            masks.append(miss)

        if sample_names is None:
            raise ParseAbort("no #CHROM header line found")

    n = len(sample_names)
    dosage = (
        np.stack(columns, axis=1) if columns else np.empty((n, 0), dtype=np.float64)
    )
    missing = (
        np.stack(masks, axis=1) if masks else np.empty((n, 0), dtype=bool)
    )
    matrix = GenotypeMatrix(
        samples=tuple(SampleRecord(sample_id=name) for name in sample_names),
        variants=tuple(variants),
        dosage=dosage,
        missing_mask=missing,
    )
    report = VcfParseReport(
        sample_names=sample_names,
        rows_total=rows_total,
        rows_parsed=len(variants),
        skipped={reason: tuple(lines) for reason, lines in skipped.items()},
    )
    return matrix, report


def write_vcf(matrix: GenotypeMatrix, dest: Source) -> None:
    """Write a matrix as a minimal VCF subset that ``parse_vcf`` reads back.

    Hard-call matrices (all observed dosages integral) are written with GT
    only, which round-trips exactly. Matrices with fractional dosages are
    written as GT:DS with DS carrying the exact dosage (shortest text that
    round-trips the float) and GT the nearest hard call.
    """
    hard = bool(
        np.all(
            (matrix.dosage == np.rint(matrix.dosage)) | matrix.missing_mask
        )
    )
    gt_text = {0: "0/0", 1: "0/1", 2: "1/1"}
    with _text_dest(dest) as out:
        out.write("##fileformat=VCFv4.2\n")
        out.write("##source=prsadjust\n")
        out.write("\t".join(_VCF_FIXED_COLUMNS) + "\t" + "\t".join(matrix.sample_ids) + "\n")
        fmt = "GT" if hard else "GT:DS"
        for j, variant in enumerate(matrix.variants):
            entries = []
            for i in range(matrix.n_samples):
                if matrix.missing_mask[i, j]:
                    entries.append("./." if hard else "./.:.")
                    continue
                d = float(matrix.dosage[i, j])
                gt = gt_text[int(np.rint(d))]
                entries.append(gt if hard else f"{gt}:{d!r}")
            out.write(
                "\t".join(
                    (
                        variant.chromosome,
                        str(variant.position),
                        variant.id,
                        variant.ref_allele,
                        variant.alt_allele,
                        ".",
                        "PASS",
                        ".",
                        fmt,
                        *entries,
                    )
                )
                + "\n"
            )


def write_parse_report(report: VcfParseReport, dest: Source, detail_dest: Source | None = None) -> None:
    """Write skip accounting as ``reason,count`` CSV, plus optional per-line detail."""
    with _text_dest(dest) as out:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["reason", "count"])
        writer.writerow(["parsed", report.rows_parsed])
        for reason in sorted(report.skipped):
            writer.writerow([reason, len(report.skipped[reason])])
    if detail_dest is not None:
        with _text_dest(detail_dest) as out:
            writer = csv.writer(out, lineterminator="\n")
            writer.writerow(["line_no", "reason"])
            details = sorted(
                (line_no, reason)
                for reason, lines in report.skipped.items()
                for line_no in lines
            )
            for line_no, reason in details:
                writer.writerow([line_no, reason])


# ---------------------------------------------------------------------------
# score weights
# ---------------------------------------------------------------------------


def parse_weights(source: Source) -> ScoreWeightTable:
    """Parse a tab-separated weight table.

    Expected header: ``variant_id effect_allele other_allele weight``.
    ``other_allele`` may be ".". Weights must be finite reals.

    Raises
    ------
    ParseAbort, MalformedRow, DuplicateVariant, NonNumericWeight
    """
    rows: list[WeightRow] = []
    seen: set[str] = set()
    with _text_source(source) as stream:
        header_seen = False
        for line_no, line in _data_lines(stream):
            if not line or line.startswith("#"):
                continue
            fields = line.split("\t")
            if not header_seen:
                if tuple(fields) != _WEIGHTS_HEADER:
                    raise ParseAbort(
                        "weights header must be " + "\t".join(_WEIGHTS_HEADER)
                    )
                header_seen = True
                continue
            if len(fields) != 4:
                raise MalformedRow(line_no, f"expected 4 columns, got {len(fields)}")
            vid, effect, other, weight_text = fields
            if vid in seen:
                raise DuplicateVariant(f"line {line_no}: variant {vid} repeated")
            try:
                weight = float(weight_text)
            except ValueError:
                raise NonNumericWeight(
                    line_no, f"weight {weight_text!r} is not a number"
                ) from None
            if not np.isfinite(weight):
                raise NonNumericWeight(line_no, f"weight {weight_text!r} is not finite")
            try:
                row = WeightRow(
                    variant_id=vid,
                    effect_allele=effect,
                    other_allele=None if other == "." else other,
                    weight=weight,
                )
            except ValueError as exc:
                raise MalformedRow(line_no, str(exc)) from None
            seen.add(vid)
            rows.append(row)
        if not header_seen:
            raise ParseAbort("weights file has no header line")
    return ScoreWeightTable(rows=tuple(rows))


def write_weights(table: ScoreWeightTable, dest: Source) -> None:
    with _text_dest(dest) as out:
        out.write("\t".join(_WEIGHTS_HEADER) + "\n")
        for row in table.rows:
            out.write(
                "\t".join(
                    (
                        row.variant_id,
                        row.effect_allele,
                        row.other_allele if row.other_allele is not None else ".",
                        repr(row.weight),
                    )
                )
                + "\n"
            )


# ---------------------------------------------------------------------------
# panels
# ---------------------------------------------------------------------------


def parse_panel(source: Source, name: str | None = None) -> PanelDefinition:
    """Parse a panel file: one variant id per line, ``#`` comments allowed.

    Duplicate ids are logged and the first occurrence kept, so the panel
    order is the order of first appearance.

    Raises
    ------
    EmptyPanel
        If no variant id remains.
    """
    if name is None:
        name = Path(source).stem if isinstance(source, (str, Path)) else "panel"
    ids: list[str] = []
    seen: set[str] = set()
    duplicates = 0
    with _text_source(source) as stream:
        for _line_no, line in _data_lines(stream):
            token = line.strip()
            if not token or token.startswith("#"):
                continue
            if token in seen:
                duplicates += 1
                continue
            seen.add(token)
            ids.append(token)
    if duplicates:
        logger.warning("panel %s: %d duplicate id(s) ignored", name, duplicates)
    if not ids:
        raise EmptyPanel(f"panel {name!r} contains no variant ids")
    return PanelDefinition(name=name, variant_ids=tuple(ids))


def write_panel(panel: PanelDefinition, dest: Source) -> None:
    with _text_dest(dest) as out:
        for vid in panel.variant_ids:
            out.write(vid + "\n")


# ---------------------------------------------------------------------------
# phenotypes
# ---------------------------------------------------------------------------


def parse_phenotypes(source: Source) -> list[SampleRecord]:
    """Parse a tab-separated phenotype table.

    Expected header: ``sample_id population sex bmi``; "." marks a missing
    value in any optional column. The obesity flag is derived as
    ``bmi > 27`` whenever BMI is present.

    Raises
    ------
    ParseAbort, MalformedRow, DuplicateSample, UnknownSexToken, NegativeBmi
    """
    records: list[SampleRecord] = []
    seen: set[str] = set()
    with _text_source(source) as stream:
        header_seen = False
        for line_no, line in _data_lines(stream):
            if not line or line.startswith("#"):
                continue
            fields = line.split("\t")
            if not header_seen:
                if tuple(fields) != _PHENOTYPES_HEADER:
                    raise ParseAbort(
                        "phenotypes header must be " + "\t".join(_PHENOTYPES_HEADER)
                    )
                header_seen = True
                continue
            if len(fields) != 4:
                raise MalformedRow(line_no, f"expected 4 columns, got {len(fields)}")
            sample_id, population, sex_text, bmi_text = fields
            if not sample_id or sample_id == ".":
                raise MalformedRow(line_no, "sample_id is missing")
            if sample_id in seen:
                raise DuplicateSample(f"line {line_no}: sample {sample_id} repeated")
            sex: str | None
            if sex_text == ".":
                sex = None
            else:
                sex = sex_text.lower()
                if sex not in ("male", "female", "unknown"):
                    raise UnknownSexToken(
                        f"line {line_no}: sex {sex_text!r} not male/female/unknown/."
                    )
            bmi: float | None
            obese: bool | None
            if bmi_text == ".":
                bmi = None
                obese = None
            else:
                try:
                    bmi = float(bmi_text)
                except ValueError:
                    raise MalformedRow(line_no, f"bmi {bmi_text!r} is not a number") from None
                if not np.isfinite(bmi):
                    raise MalformedRow(line_no, f"bmi {bmi_text!r} is not finite")
                if bmi < 0:
                    raise NegativeBmi(f"line {line_no}: bmi {bmi_text} is negative")
                obese = bmi > OBESITY_BMI_THRESHOLD
            seen.add(sample_id)
            records.append(
                SampleRecord(
                    sample_id=sample_id,
                    population=None if population == "." else population,
                    sex=sex,
                    bmi=bmi,
                    obese=obese,
                )
            )
        if not header_seen:
            raise ParseAbort("phenotypes file has no header line")
    return records


def write_phenotypes(records: list[SampleRecord], dest: Source) -> None:
    with _text_dest(dest) as out:
        out.write("\t".join(_PHENOTYPES_HEADER) + "\n")
        for rec in records:
            out.write(
                "\t".join(
                    (
                        rec.sample_id,
                        rec.population if rec.population is not None else ".",
                        rec.sex if rec.sex is not None else ".",
                        repr(rec.bmi) if rec.bmi is not None else ".",
                    )
                )
                + "\n"
            )


# ---------------------------------------------------------------------------
# per-sample report CSV
# ---------------------------------------------------------------------------


def _format_real(value: float) -> str:
    return format(value, ".10g")


def write_report_csv(report: CohortReport, dest: Source) -> None:
    """Write per-sample results: ids, PCs, raw and adjusted scores, label.

    Reals carry 10 significant digits; missing values are ".". Row order is
    the report's row order, so output is deterministic.
    """
    if not report.rows:
        raise ValueError("report has no rows")
    k = len(report.rows[0].pcs)
    with _text_dest(dest) as out:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(
            ["sample_id", "population"]
            + [f"pc{i + 1}" for i in range(k)]
            + ["raw_prs", "adjusted_prs", "obese"]
        )
        for row in report.rows:
            if len(row.pcs) != k:
                raise ValueError(f"sample {row.sample_id}: expected {k} pcs")
            writer.writerow(
                [
                    row.sample_id,
                    row.population if row.population is not None else ".",
                    *[_format_real(pc) for pc in row.pcs],
                    _format_real(row.raw_prs),
                    _format_real(row.adjusted_prs),
                    "." if row.obese is None else ("1" if row.obese else "0"),
                ]
            )


def read_report_csv(source: Source) -> CohortReport:
    """Read back a report CSV written by :func:`write_report_csv`."""
    with _text_source(source) as stream:
        reader = csv.reader(stream)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseAbort("report CSV is empty") from None
        if (
            len(header) < 5
            or header[:2] != ["sample_id", "population"]
            or header[-3:] != ["raw_prs", "adjusted_prs", "obese"]
        ):
            raise ParseAbort("report CSV header is not in the expected layout")
        pc_names = header[2:-3]
        if pc_names != [f"pc{i + 1}" for i in range(len(pc_names))]:
            raise ParseAbort("report CSV pc columns must be pc1..pck")
        rows: list[ReportRow] = []
        for line_no, fields in enumerate(reader, start=2):
            if len(fields) != len(header):
                raise MalformedRow(line_no, f"expected {len(header)} fields")
            try:
                pcs = tuple(float(v) for v in fields[2:-3])
                raw = float(fields[-3])
                adjusted = float(fields[-2])
            except ValueError:
                raise MalformedRow(line_no, "non-numeric score field") from None
            obese_text = fields[-1]
            if obese_text == ".":
                obese = None
            elif obese_text in ("0", "1"):
                obese = obese_text == "1"
            else:
                raise MalformedRow(line_no, f"obese {obese_text!r} must be 0, 1 or .")
            rows.append(
                ReportRow(
                    sample_id=fields[0],
                    population=None if fields[1] == "." else fields[1],
                    pcs=pcs,
                    raw_prs=raw,
                    adjusted_prs=adjusted,
                    obese=obese,
                )
            )
    if not rows:
        raise ParseAbort("report CSV has no data rows")
    return CohortReport(rows=tuple(rows))
