"""Synthetic multi-population cohorts with known ground truth.

Allele frequencies follow the Balding-Nichols model: each variant draws an
ancestral frequency p ~ Uniform(0.05, 0.95), and every population k with
drift parameter F_k draws its own frequency from

    Beta(p * (1 - F_k) / F_k,  (1 - p) * (1 - F_k) / F_k),

which has mean p and variance F_k * p * (1 - p). Genotypes are then
Binomial(2, p_pop) per sample. Two disjoint variant sets are generated:
an ancestry panel (no phenotype effect, used for PCA) and trait variants
carrying normally drawn weights.

The liability of sample s in population k is

    liability_s = sum_i w_i * effect_dosage_si + offset_k + Normal(0, noise_sd)

and BMI is the affine map ``bmi_base + bmi_slope * liability``. Nonzero
per-population offsets confound the phenotype with ancestry on purpose.

All randomness comes from one ``numpy.random.default_rng(seed)`` (the
PCG64 generator, stable across platforms), consumed in a fixed order:
ancestral frequencies, per-population frequencies, per-population
genotypes, ref alleles, alt alleles, sexes, trait weights, effect-allele
sides, liability noise. Equal seeds therefore reproduce cohorts, and the
files written from them, byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io as pio
from .errors import ConfigInvalid
from .genotypes import (
    GenotypeMatrix,
    PanelDefinition,
    SampleRecord,
    ScoreWeightTable,
    Variant,
    WeightRow,
    OBESITY_BMI_THRESHOLD,
)

# Non-ambiguous alt choices per ref base: never the base itself and never
# its complement, so no generated variant is strand-ambiguous.
_ALT_CHOICES = {"A": ("C", "G"), "C": ("A", "T"), "G": ("A", "T"), "T": ("C", "G")}
_BASES = ("A", "C", "G", "T")


@dataclass(frozen=True)
class PopulationConfig:
    """One population: size, drift from the ancestral pool, liability offset."""

    label: str
    n_samples: int
    fst: float
    offset: float = 0.0
    n_test: int = 0


@dataclass(frozen=True)
class ScenarioConfig:
    """Full recipe for one synthetic cohort."""

    seed: int
    populations: tuple[PopulationConfig, ...]
    n_ancestry_snps: int = 2000
    n_trait_snps: int = 100
    trait_weight_mean: float = 0.0
    trait_weight_sd: float = 0.15
    noise_sd: float = 1.0
    bmi_base: float = 25.0
    bmi_slope: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "populations", tuple(self.populations))
        self.validate()

    def validate(self) -> None:
        if not self.populations:
            raise ConfigInvalid("populations: at least one population is required")
        labels = [p.label for p in self.populations]
        if len(set(labels)) != len(labels):
            raise ConfigInvalid("populations: labels must be unique")
        for pop in self.populations:
            if not pop.label:
                raise ConfigInvalid("label: population label must be non-empty")
            if pop.n_samples < 1:
                raise ConfigInvalid(
                    f"n_samples: population {pop.label} needs n_samples >= 1, got {pop.n_samples}"
                )
            if pop.n_test < 0:
                raise ConfigInvalid(
                    f"n_test: population {pop.label} needs n_test >= 0, got {pop.n_test}"
                )
            if not 0.0 < pop.fst < 1.0:
                raise ConfigInvalid(
                    f"fst: population {pop.label} needs fst in (0, 1), got {pop.fst}"
                )
            if not np.isfinite(pop.offset):
                raise ConfigInvalid(f"offset: population {pop.label} offset must be finite")
        if self.n_ancestry_snps < 1:
            raise ConfigInvalid(f"n_ancestry_snps: must be >= 1, got {self.n_ancestry_snps}")
        if self.n_trait_snps < 1:
            raise ConfigInvalid(f"n_trait_snps: must be >= 1, got {self.n_trait_snps}")
        if self.trait_weight_sd < 0:
            raise ConfigInvalid(f"trait_weight_sd: must be >= 0, got {self.trait_weight_sd}")
        if self.noise_sd < 0:
            raise ConfigInvalid(f"noise_sd: must be >= 0, got {self.noise_sd}")
        for name in ("trait_weight_mean", "noise_sd", "trait_weight_sd", "bmi_base", "bmi_slope"):
            if not np.isfinite(getattr(self, name)):
                raise ConfigInvalid(f"{name}: must be finite")

    @property
    def n_total_samples(self) -> int:
        return sum(p.n_samples + p.n_test for p in self.populations)


@dataclass(eq=False)
class TruthRecord:
    """Generator-side ground truth for oracle checks."""

    liabilities: np.ndarray
    ancestral_freqs: np.ndarray
    population_freqs: dict[str, np.ndarray]
    effect_is_alt: np.ndarray


@dataclass(eq=False)
class SyntheticCohort:
    """Everything one scenario produced, training and held-out rows together."""

    config: ScenarioConfig
    matrix: GenotypeMatrix
    weights: ScoreWeightTable
    panel: PanelDefinition
    truth: TruthRecord
    train_indices: tuple[int, ...]
    test_indices: tuple[int, ...]

    @property
    def has_test(self) -> bool:
        return bool(self.test_indices)

    def train_matrix(self) -> GenotypeMatrix:
        return self.matrix.take_samples(self.train_indices)

    def test_matrix(self) -> GenotypeMatrix:
        if not self.test_indices:
            raise ValueError("scenario has no held-out samples")
        return self.matrix.take_samples(self.test_indices)


def generate_cohort(config: ScenarioConfig) -> SyntheticCohort:
    """Draw one cohort; equal configs yield identical cohorts.

    Within each population the first ``n_samples`` rows are the training
    split and the following ``n_test`` rows the held-out split; their
    indices into the full matrix are recorded on the returned cohort.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    n_anc, n_trait = config.n_ancestry_snps, config.n_trait_snps
    n_snps = n_anc + n_trait

    # Draw order is part of the contract; see the module docstring.
    ancestral = rng.uniform(0.05, 0.95, size=n_snps)
    pop_freqs: dict[str, np.ndarray] = {}
    for pop in config.populations:
        a = ancestral * (1.0 - pop.fst) / pop.fst
        b = (1.0 - ancestral) * (1.0 - pop.fst) / pop.fst
        pop_freqs[pop.label] = rng.beta(a, b)
    blocks = []
    for pop in config.populations:
        size = pop.n_samples + pop.n_test
        blocks.append(rng.binomial(2, pop_freqs[pop.label], size=(size, n_snps)))
    dosage = np.concatenate(blocks, axis=0).astype(np.float64)

    ref_idx = rng.integers(0, 4, size=n_snps)
    alt_idx = rng.integers(0, 2, size=n_snps)
    refs = [_BASES[i] for i in ref_idx]
    alts = [_ALT_CHOICES[refs[j]][alt_idx[j]] for j in range(n_snps)]
    variants = []
    for j in range(n_snps):
        if j < n_anc:
            vid = f"rs{100001 + j}"
        else:
            vid = f"rs{500001 + (j - n_anc)}"
        variants.append(Variant(vid, "1", 1000 * (j + 1), refs[j], alts[j]))

    sexes = rng.integers(0, 2, size=config.n_total_samples)

    weights_values = rng.normal(
        config.trait_weight_mean, config.trait_weight_sd, size=n_trait
    )
    effect_is_alt = rng.integers(0, 2, size=n_trait).astype(bool)
    noise = rng.normal(0.0, config.noise_sd, size=config.n_total_samples)

    trait_dosage = dosage[:, n_anc:]
    effect_dosage = np.where(effect_is_alt, trait_dosage, 2.0 - trait_dosage)
    offsets = np.concatenate(
        [np.full(p.n_samples + p.n_test, p.offset) for p in config.populations]
    )
    liabilities = effect_dosage @ weights_values + offsets + noise
    bmi = config.bmi_base + config.bmi_slope * liabilities

    samples = []
    row = 0
    train_indices: list[int] = []
    test_indices: list[int] = []
    for pop in config.populations:
        for i in range(pop.n_samples + pop.n_test):
            samples.append(
                SampleRecord(
                    sample_id=f"{pop.label}{i + 1:04d}",
                    population=pop.label,
                    sex="male" if sexes[row] == 0 else "female",
                    bmi=float(bmi[row]),
                    obese=bool(bmi[row] > OBESITY_BMI_THRESHOLD),
                )
            )
            (train_indices if i < pop.n_samples else test_indices).append(row)
            row += 1

    matrix = GenotypeMatrix(
        samples=tuple(samples),
        variants=tuple(variants),
        dosage=dosage,
        missing_mask=np.zeros(dosage.shape, dtype=bool),
    )
    weight_rows = []
    for t in range(n_trait):
        variant = variants[n_anc + t]
        if effect_is_alt[t]:
            effect, other = variant.alt_allele, variant.ref_allele
        else:
            effect, other = variant.ref_allele, variant.alt_allele
        weight_rows.append(
            WeightRow(
                variant_id=variant.id,
                effect_allele=effect,
                other_allele=other,
                weight=float(weights_values[t]),
            )
        )
    panel = PanelDefinition(
        name="ancestry", variant_ids=tuple(v.id for v in variants[:n_anc])
    )
    truth = TruthRecord(
        liabilities=liabilities,
        ancestral_freqs=ancestral,
        population_freqs=pop_freqs,
        effect_is_alt=effect_is_alt,
    )
    return SyntheticCohort(
        config=config,
        matrix=matrix,
        weights=ScoreWeightTable(rows=tuple(weight_rows)),
        panel=panel,
        truth=truth,
        train_indices=tuple(train_indices),
        test_indices=tuple(test_indices),
    )


def write_scenario(cohort: SyntheticCohort, out_dir: str | Path) -> list[Path]:
    """Write the cohort as files the ingestion layer reads back unchanged.

    Without a held-out split: ``genotypes.vcf``, ``weights.tsv``,
    ``panel.txt``, ``phenotypes.tsv``. With one, the genotypes come as
    ``train_genotypes.vcf`` and ``test_genotypes.vcf`` instead; the
    phenotype table always covers every sample.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: list[Path] = []
    if cohort.has_test:
        for name, matrix in (
            ("train_genotypes.vcf", cohort.train_matrix()),
            ("test_genotypes.vcf", cohort.test_matrix()),
        ):
            path = out / name
            pio.write_vcf(matrix, path)
            paths.append(path)
    else:
        path = out / "genotypes.vcf"
        pio.write_vcf(cohort.matrix, path)
        paths.append(path)
    weights_path = out / "weights.tsv"
    pio.write_weights(cohort.weights, weights_path)
    paths.append(weights_path)
    panel_path = out / "panel.txt"
    pio.write_panel(cohort.panel, panel_path)
    paths.append(panel_path)
    phenotypes_path = out / "phenotypes.tsv"
    pio.write_phenotypes(list(cohort.matrix.samples), phenotypes_path)
    paths.append(phenotypes_path)
    return paths


# ---------------------------------------------------------------------------
# scenario config files (flat key=value)
# ---------------------------------------------------------------------------

_SCALAR_KEYS = {
    "seed": int,
    "n_ancestry_snps": int,
    "n_trait_snps": int,
    "trait_weight_mean": float,
    "trait_weight_sd": float,
    "noise_sd": float,
    "bmi_base": float,
    "bmi_slope": float,
}


def parse_scenario_config(source) -> ScenarioConfig:
    """Parse a flat key=value scenario file.

    One ``population=label:n:fst:offset[:n_test]`` line per population;
    scalar keys as in the module's writer. Unknown keys and malformed
    values raise :class:`ConfigInvalid` naming the offending field.
    """
    values: dict[str, object] = {}
    populations: list[PopulationConfig] = []
    with pio._text_source(source) as stream:
        for _line_no, line in pio._data_lines(stream):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            key, sep, value = text.partition("=")
            key, value = key.strip(), value.strip()
            if not sep:
                raise ConfigInvalid(f"{key}: expected key=value")
            if key == "population":
                parts = value.split(":")
                if len(parts) not in (4, 5):
                    raise ConfigInvalid(
                        f"population: expected label:n:fst:offset[:n_test], got {value!r}"
                    )
                try:
                    pop = PopulationConfig(
                        label=parts[0],
                        n_samples=int(parts[1]),
                        fst=float(parts[2]),
                        offset=float(parts[3]),
                        n_test=int(parts[4]) if len(parts) == 5 else 0,
                    )
                except ValueError as exc:
                    raise ConfigInvalid(f"population: {exc}") from None
                populations.append(pop)
            elif key in _SCALAR_KEYS:
                try:
                    values[key] = _SCALAR_KEYS[key](value)
                except ValueError:
                    raise ConfigInvalid(f"{key}: cannot parse {value!r}") from None
            else:
                raise ConfigInvalid(f"{key}: unknown scenario key")
    if "seed" not in values:
        raise ConfigInvalid("seed: required")
    if not populations:
        raise ConfigInvalid("population: at least one required")
    kwargs = {
        "seed": values["seed"],
        "populations": tuple(populations),
    }
    for key, value in values.items():
        if key == "seed":
            continue
        kwargs[key] = value
    return ScenarioConfig(**kwargs)


def write_scenario_config(config: ScenarioConfig, dest) -> None:
    own = isinstance(dest, (str, bytes)) or hasattr(dest, "__fspath__")
    handle = open(dest, "w", encoding="utf-8", newline="\n") if own else dest
    try:
        handle.write(f"seed={config.seed}\n")
        for pop in config.populations:
            handle.write(
                f"population={pop.label}:{pop.n_samples}:{pop.fst!r}:{pop.offset!r}"
                + (f":{pop.n_test}" if pop.n_test else "")
                + "\n"
            )
        handle.write(f"n_ancestry_snps={config.n_ancestry_snps}\n")
        handle.write(f"n_trait_snps={config.n_trait_snps}\n")
        handle.write(f"trait_weight_mean={config.trait_weight_mean!r}\n")
        handle.write(f"trait_weight_sd={config.trait_weight_sd!r}\n")
        handle.write(f"noise_sd={config.noise_sd!r}\n")
        handle.write(f"bmi_base={config.bmi_base!r}\n")
        handle.write(f"bmi_slope={config.bmi_slope!r}\n")
    finally:
        if own:
            handle.close()


DEFAULT_SCENARIO = ScenarioConfig(
    seed=42,
    populations=(
        PopulationConfig(label="POPA", n_samples=200, fst=0.1, offset=1.0),
        PopulationConfig(label="POPB", n_samples=200, fst=0.1, offset=0.0),
        PopulationConfig(label="POPC", n_samples=200, fst=0.1, offset=-1.0),
    ),
    n_ancestry_snps=2000,
    n_trait_snps=100,
    trait_weight_mean=0.0,
    trait_weight_sd=0.15,
    noise_sd=1.0,
    bmi_base=25.0,
    bmi_slope=2.0,
)
