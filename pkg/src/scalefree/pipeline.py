"""Dataset ingestion, per-series orchestration, and report emission.

The pipeline reproduces the full workflow: load (or synthesize) per-subject
map time series, run the spectrum and leader analyses on every series,
assemble the group table, run the statistical battery, and write
deterministic CSV/JSON artifacts.  All floating-point output uses 17
significant digits so files round-trip exactly; reruns with the same config
and seeds are byte-identical regardless of worker count.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (DataFormatError, ParameterError, ScaleFreeError,
                     ScaleRangeError)
from .grouptests import (PARAMS, STATES, BatteryReport, GroupSummary,
                         GroupTable, MapTaxonomy, aggregate, run_battery)
from .errors import EstimationError
from .leaders_mf import DEFAULT_Q_GRID, MfEstimate, multifractal_estimate
from .scaling import (estimate_hurst, fit_loglog, fit_psd_powerlaw,
                      scale_to_frequency, welch_psd, wavelet_spectrum)
from .synth import GeneratorSpec, gen_fgn, gen_mrw
from .wavelet import (MotherWavelet, Signal, build_wavelet, dwt,
                      max_feasible_octave, sup_magnitudes)

_FMT = "%.17g"

DEFAULT_SYNTHETIC = {
    "subjects": 12,
    "length": 2048,
    "maps": {"F": 25, "A": 13, "U": 4},
    "rest_hurst": {"F": 0.8, "A": 0.75, "U": 0.78},
    "task_hurst": {"F": 0.7, "A": 0.65, "U": 0.67},
    "lambda2": {"F": 0.03, "A": 0.03, "U": 0.03},
}

NETWORK_CYCLE = ("Att", "DMN", "Mot", "N-c", "Vis")
ARTIFACT_CYCLE = ("Ven", "WhM", "Mov", "Oth")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    return _FMT % float(x)


@dataclass(frozen=True)
class AnalysisConfig:
    """Resolved analysis parameters; see README for the JSON schema."""

    octave_range: tuple = (3, 6)
    n_vanishing: int = 3
    gamma_mode: str = "fixed"
    gamma_value: float = 2.0
    gamma_eps: float = 0.1
    q_grid: tuple = DEFAULT_Q_GRID
    p_max: int = 2
    alpha_levels: tuple = (0.01, 0.05)
    welch_segment_length: int | None = None
    welch_overlap: float = 0.5
    welch_window: str = "hann"
    sampling_rate: float = 1.0
    inputs: dict | None = None
    synthetic: dict | None = None
    output_dir: str = "scalefree-out"
    workers: int = 1
    seed: int = 0

    def __post_init__(self):
        j1, j2 = self.octave_range
        if not (1 <= j1 < j2):
            raise ParameterError(f"invalid octave_range {self.octave_range}")
        if j2 - j1 < 2:
            raise ParameterError("octave_range must span at least 3 octaves")
        for a in self.alpha_levels:
            if not 0.0 < a < 1.0:
                raise ParameterError(f"alpha level {a} outside (0, 1)")
        if self.workers < 1:
            raise ParameterError("workers must be >= 1")
        if (self.inputs is None) == (self.synthetic is None):
            raise ParameterError(
                "config must set exactly one of 'inputs' and 'synthetic'"
            )
        if self.synthetic is not None:
            object.__setattr__(self, "synthetic",
                               _resolve_synthetic(self.synthetic))
        object.__setattr__(self, "octave_range", tuple(self.octave_range))
        object.__setattr__(self, "alpha_levels", tuple(self.alpha_levels))
        object.__setattr__(self, "q_grid", tuple(float(q) for q in self.q_grid))

    @classmethod
    def from_dict(cls, raw: dict) -> "AnalysisConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        data = dict(raw)
        gamma = data.pop("gamma", None)
        if gamma is not None:
            data["gamma_mode"] = gamma.get("mode", "fixed")
            if "value" in gamma:
                data["gamma_value"] = gamma["value"]
            if "eps" in gamma:
                data["gamma_eps"] = gamma["eps"]
        welch = data.pop("welch", None)
        if welch is not None:
            if "segment_length" in welch:
                data["welch_segment_length"] = welch["segment_length"]
            if "overlap_fraction" in welch:
                data["welch_overlap"] = welch["overlap_fraction"]
            if "window" in welch:
                data["welch_window"] = welch["window"]
        unknown = set(data) - known
        if unknown:
            raise DataFormatError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "AnalysisConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def canonical_json(self) -> str:
        """Analysis-relevant fields only: where the outputs go and how many
        workers computed them must not change the provenance hash."""
        d = dataclasses.asdict(self)
        d.pop("output_dir")
        d.pop("workers")
        return json.dumps(d, sort_keys=True, separators=(",", ":"),
                          default=list)

    def sha256(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def _resolve_synthetic(raw: dict) -> dict:
    out = json.loads(json.dumps(DEFAULT_SYNTHETIC))
    for key, value in raw.items():
        if key not in out:
            raise DataFormatError(f"unknown synthetic key {key!r}")
        if isinstance(out[key], dict):
            unknown = set(value) - set(out[key])
            if unknown:
                raise DataFormatError(
                    f"unknown synthetic.{key} keys: {sorted(unknown)}")
            out[key].update(value)
        else:
            out[key] = value
    return out


def synthetic_taxonomy(n_f: int = 25, n_a: int = 13, n_u: int = 4) -> MapTaxonomy:
    """Paper-shaped taxonomy: F maps tagged with cycling functional networks,
    A maps with cycling artifact types, U maps untagged."""
    classes = ["F"] * n_f + ["A"] * n_a + ["U"] * n_u
    tags = [NETWORK_CYCLE[i % len(NETWORK_CYCLE)] for i in range(n_f)]
    tags += [ARTIFACT_CYCLE[i % len(ARTIFACT_CYCLE)] for i in range(n_a)]
    tags += [""] * n_u
    return MapTaxonomy(classes=tuple(classes), tags=tuple(tags))


@dataclass(frozen=True)
class Dataset:
    """Per-subject, per-state map time-series matrices (n x K)."""

    subjects: tuple
    runs: dict
    taxonomy: MapTaxonomy
    sampling_rate: float

    @property
    def n_maps(self) -> int:
        return self.taxonomy.n_maps

    def series_length(self, state: str) -> int:
        for subject in self.subjects:
            return self.runs[(subject, state)].shape[0]
        raise ParameterError("dataset has no subjects")


def load_taxonomy(path) -> MapTaxonomy:
    """Read the taxonomy CSV (map_index, class, network_or_artifact)."""
    classes = {}
    tags = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["map_index", "class"]:
            raise DataFormatError(
                f"{path}: expected header map_index,class,network_or_artifact"
            )
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                k = int(row[0])
            except ValueError:
                raise DataFormatError(
                    f"{path}:{line_no}: map_index {row[0]!r} is not an integer"
                ) from None
            if k in classes:
                raise DataFormatError(f"{path}:{line_no}: duplicate map_index {k}")
            classes[k] = row[1].strip()
            tags[k] = row[2].strip() if len(row) > 2 else ""
    if not classes:
        raise DataFormatError(f"{path}: taxonomy is empty")
    expected = list(range(1, len(classes) + 1))
    if sorted(classes) != expected:
        raise DataFormatError(
            f"{path}: map_index values must cover 1..{len(classes)}"
        )
    return MapTaxonomy(
        classes=tuple(classes[k] for k in expected),
        tags=tuple(tags[k] for k in expected),
    )


def _load_run_csv(path, n_maps: int) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataFormatError(f"{path}: empty file")
        header = [h.strip() for h in header]
        expected = ["t"] + [f"map_{k}" for k in range(1, n_maps + 1)]
        if header != expected:
            raise DataFormatError(
                f"{path}: header has {len(header) - 1} map column(s), "
                f"taxonomy declares {n_maps}"
            )
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != n_maps + 1:
                raise DataFormatError(
                    f"{path}:{line_no}: expected {n_maps + 1} columns, got {len(row)}"
                )
            values = []
            for col, tok in zip(header[1:], row[1:]):
                try:
                    v = float(tok)
                except ValueError:
                    raise DataFormatError(
                        f"{path}:{line_no}: column {col}: cannot parse {tok!r}"
                    ) from None
                if not math.isfinite(v):
                    raise DataFormatError(
                        f"{path}:{line_no}: column {col}: non-finite value {tok!r}"
                    )
                values.append(v)
            rows.append(values)
    if len(rows) < 2:
        raise DataFormatError(f"{path}: fewer than 2 sample rows")
    return np.asarray(rows, dtype=np.float64)


def load_dataset(config: AnalysisConfig) -> Dataset:
    """Load and validate the file-backed dataset declared in config.inputs."""
    if config.inputs is None:
        raise ParameterError("config has no 'inputs' section")
    inputs = config.inputs
    taxonomy = load_taxonomy(inputs["taxonomy"])
    expected = inputs.get("expected_class_counts")
    if expected is not None:
        taxonomy.assert_counts(*expected)
    subjects = []
    runs = {}
    lengths = {}
    for entry in inputs["subjects"]:
        sid = str(entry["id"])
        if sid in subjects:
            raise DataFormatError(f"duplicate subject id {sid!r}")
        subjects.append(sid)
        for state in STATES:
            matrix = _load_run_csv(entry[state], taxonomy.n_maps)
            n = matrix.shape[0]
            if state in lengths and lengths[state] != n:
                raise DataFormatError(
                    f"subject {sid!r} {state} run has {n} samples; previous "
                    f"subjects have {lengths[state]}"
                )
            lengths[state] = n
            runs[(sid, state)] = matrix
    if not subjects:
        raise DataFormatError("inputs.subjects is empty")
    return Dataset(subjects=tuple(subjects), runs=runs, taxonomy=taxonomy,
                   sampling_rate=config.sampling_rate)


def project_onto_maps(data: np.ndarray, maps: np.ndarray,
                      cond_warn: float = 1e8) -> np.ndarray:
    """Least-squares projection of voxel data onto spatial maps.

    Solves min ||Y - U V^t||^2 via the closed form U = Y V (V^t V)^{-1}.

    Raises:
        ParameterError: when V^t V is singular; the message reports the
            estimated rank of the map matrix.
    """
    y = np.asarray(data, dtype=np.float64)
    v = np.asarray(maps, dtype=np.float64)
    if y.ndim != 2 or v.ndim != 2 or y.shape[1] != v.shape[0]:
        raise ParameterError(
            f"shape mismatch: data {y.shape} cannot project onto maps {v.shape}"
        )
    gram = v.T @ v
    cond = float(np.linalg.cond(gram))
    if not math.isfinite(cond) or cond > 1.0 / np.finfo(np.float64).eps:
        rank = int(np.linalg.matrix_rank(v))
        raise ParameterError(
            f"map matrix is rank-deficient (estimated rank {rank} of "
            f"{v.shape[1]}); V^t V is singular"
        )
    if cond > cond_warn:
        warnings.warn(
            f"V^t V condition number {cond:.3e}; projection may be unstable",
            stacklevel=2,
        )
    return y @ np.linalg.solve(gram, v.T).T


def analyze_series(signal: Signal, config: AnalysisConfig,
                   wavelet: MotherWavelet | None = None) -> MfEstimate:
    """Spectrum path plus leader path for one series.

    The wavelet-spectrum fit gives (beta, H, stationarity); the leader
    analysis then runs with reference_shift = 1 when the series is
    stationary (increments convention) and 0 otherwise, so c1 is always
    quoted on the same scale as H.
    """
    j1, j2 = config.octave_range
    if wavelet is None:
        wavelet = build_wavelet(config.n_vanishing)
    try:
        feasible = max_feasible_octave(len(signal), wavelet)
        if j2 > feasible:
            raise ScaleRangeError(
                f"length {len(signal)} supports octaves up to {feasible}, "
                f"configured range is ({j1}, {j2})"
            )
        pyramid = dwt(signal, wavelet, j2)
        sup_magnitudes(pyramid, j1, j2)  # degenerate-input gate

        spectrum = wavelet_spectrum(pyramid)
        fit = fit_loglog(spectrum.octave_pairs(), j1, j2)
        hurst = estimate_hurst(fit)
        shift = 1 if hurst.stationary else 0
        estimate = multifractal_estimate(
            pyramid, j1, j2, q_grid=config.q_grid,
            gamma_mode=config.gamma_mode, gamma_value=config.gamma_value,
            gamma_eps=config.gamma_eps, p_max=config.p_max,
            reference_shift=shift, label=signal.label,
        )
        order = np.argsort(spectrum.octave_index)
        diagnostics = dict(estimate.diagnostics)
        diagnostics["spectrum_fit"] = fit
        diagnostics["spectrum_octaves"] = tuple(
            int(j) for j in spectrum.octave_index[order])
        diagnostics["spectrum_log2"] = tuple(
            float(v) for v in np.log2(spectrum.power[order]))
        diagnostics["welch_beta"] = _welch_beta_crosscheck(signal, config)
        return replace(
            estimate, beta=hurst.beta, hurst=hurst.hurst,
            stationary=hurst.stationary, diagnostics=diagnostics,
        )
    except ScaleFreeError as exc:
        if signal.label and signal.label not in str(exc):
            raise type(exc)(f"{signal.label}: {exc}") from exc
        raise


def _welch_beta_crosscheck(signal: Signal, config: AnalysisConfig) -> float:
    """Welch-based beta over the configured octave band; NaN when the
    segmentation or band is too thin for a fit (cross-check only)."""
    j1, j2 = config.octave_range
    try:
        spectrum = welch_psd(
            signal, segment_length=config.welch_segment_length,
            overlap_fraction=config.welch_overlap, window=config.welch_window)
        band = (scale_to_frequency(j2, signal.sampling_rate),
                scale_to_frequency(j1, signal.sampling_rate))
        return fit_psd_powerlaw(spectrum, *band).beta
    except (EstimationError, ParameterError):
        return float("nan")


def _series_seed(seed: int, subject_idx: int, map_idx: int, state_idx: int) -> int:
    ss = np.random.SeedSequence((int(seed), subject_idx, map_idx, state_idx))
    return int(ss.generate_state(2, np.uint64)[0])


def _synthetic_signal(config: AnalysisConfig, subject_idx: int, map_idx: int,
                      state_idx: int, cls: str, label: str) -> Signal:
    syn = config.synthetic
    hurst = (syn["rest_hurst"] if state_idx == 0 else syn["task_hurst"])[cls]
    lambda2 = syn["lambda2"][cls]
    seed = _series_seed(config.seed, subject_idx, map_idx, state_idx)
    n = syn["length"]
    if lambda2 > 0:
        walk = gen_mrw(GeneratorSpec(
            kind="mrw", hurst=hurst, length=n, seed=seed, lambda2=lambda2,
            sampling_rate=config.sampling_rate))
        samples = np.diff(walk.samples, prepend=0.0)
    else:
        samples = gen_fgn(GeneratorSpec(
            kind="fgn", hurst=hurst, length=n, seed=seed,
            sampling_rate=config.sampling_rate)).samples
    return Signal(samples, config.sampling_rate, label=label)


@dataclass(frozen=True)
class SeriesResult:
    key: tuple
    estimate: MfEstimate
    spectrum_octaves: tuple
    spectrum_log2: tuple
    fit_slope: float
    fit_intercept: float


def _run_one(task) -> tuple:
    key, samples, sampling_rate, label, config = task
    try:
        signal = Signal(np.asarray(samples), sampling_rate, label=label)
        estimate = analyze_series(signal, config)
        fit = estimate.diagnostics["spectrum_fit"]
        return key, SeriesResult(
            key=key, estimate=estimate,
            spectrum_octaves=estimate.diagnostics["spectrum_octaves"],
            spectrum_log2=estimate.diagnostics["spectrum_log2"],
            fit_slope=fit.slope, fit_intercept=fit.intercept,
        ), None
    except ScaleFreeError as exc:
        return key, None, f"{type(exc).__name__}: {exc}"


@dataclass(frozen=True)
class AnalysisReport:
    results: dict
    failures: dict
    table: GroupTable | None
    summary: GroupSummary | None
    battery: BatteryReport | None
    provenance: dict
    dropped_subjects: tuple
    output_dir: str


def _validate_feasibility(config: AnalysisConfig, dataset: Dataset) -> None:
    wavelet = build_wavelet(config.n_vanishing)
    j2 = config.octave_range[1]
    problems = []
    for state in STATES:
        n = dataset.series_length(state)
        feasible = max_feasible_octave(n, wavelet)
        if j2 > feasible:
            problems.append(
                f"{state} runs of length {n} support octaves up to {feasible}"
            )
    if problems:
        raise ScaleRangeError(
            "configured octave range "
            f"{config.octave_range} infeasible: " + "; ".join(problems)
        )


def _build_dataset(config: AnalysisConfig) -> Dataset:
    if config.synthetic is not None:
        syn = config.synthetic
        counts = syn["maps"]
        taxonomy = synthetic_taxonomy(counts["F"], counts["A"], counts["U"])
        subjects = tuple(f"s{idx + 1:02d}" for idx in range(syn["subjects"]))
        return Dataset(subjects=subjects, runs={}, taxonomy=taxonomy,
                       sampling_rate=config.sampling_rate)
    return load_dataset(config)


def _work_items(config: AnalysisConfig, dataset: Dataset):
    labels = dataset.taxonomy.display_labels()
    items = []
    for s_idx, subject in enumerate(dataset.subjects):
        for k in range(dataset.n_maps):
            for j, state in enumerate(STATES):
                key = (subject, labels[k], state)
                label = f"{subject}/{labels[k]}/{state}"
                if config.synthetic is not None:
                    cls = dataset.taxonomy.classes[k]
                    sig = _synthetic_signal(config, s_idx, k, j, cls, label)
                    samples = sig.samples
                else:
                    samples = dataset.runs[(subject, state)][:, k]
                items.append((key, samples, dataset.sampling_rate, label, config))
    return items


def run_full_analysis(config: AnalysisConfig) -> AnalysisReport:
    """Execute the complete workflow and write all artifacts.

    Per-series failures are collected, not fatal; subjects with incomplete
    cells are dropped (listwise) before the group stage.  Outputs are
    byte-identical across reruns and worker counts.
    """
    dataset = _build_dataset(config)
    if config.synthetic is None:
        _validate_feasibility(config, dataset)
    else:
        wavelet = build_wavelet(config.n_vanishing)
        feasible = max_feasible_octave(config.synthetic["length"], wavelet)
        if config.octave_range[1] > feasible:
            raise ScaleRangeError(
                f"synthetic length {config.synthetic['length']} supports "
                f"octaves up to {feasible}, configured range is "
                f"{config.octave_range}"
            )

    items = _work_items(config, dataset)
    if config.workers == 1:
        outcomes = [_run_one(task) for task in items]
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(_run_one, items, chunksize=8))
    outcomes.sort(key=lambda o: o[0])

    results = {}
    failures = {}
    for key, result, error in outcomes:
        if error is None:
            results[key] = result
        else:
            failures[key] = error

    labels = dataset.taxonomy.display_labels()
    complete_subjects = []
    for subject in dataset.subjects:
        ok = all((subject, lab, st) in results for lab in labels for st in STATES)
        if ok:
            complete_subjects.append(subject)
    dropped = tuple(s for s in dataset.subjects if s not in complete_subjects)

    table = summary = battery = None
    if len(complete_subjects) >= 3:
        est = np.empty((len(complete_subjects), dataset.n_maps, 2, len(PARAMS)))
        for si, subject in enumerate(complete_subjects):
            for k, lab in enumerate(labels):
                for j, state in enumerate(STATES):
                    e = results[(subject, lab, state)].estimate
                    est[si, k, j, :] = (e.c1, e.c2, e.hurst)
        table = GroupTable(estimates=est, taxonomy=dataset.taxonomy,
                           subjects=tuple(complete_subjects))
        summary = aggregate(table)
        battery = run_battery(table, alpha_levels=config.alpha_levels)

    provenance = {
        "config_sha256": config.sha256(),
        "seed": config.seed,
        "version": __version__,
        "n_series": len(items),
        "n_failures": len(failures),
    }
    report = AnalysisReport(
        results=results, failures=failures, table=table, summary=summary,
        battery=battery, provenance=provenance, dropped_subjects=dropped,
        output_dir=config.output_dir,
    )
    _write_report(config, dataset, report)
    return report


def _write_report(config: AnalysisConfig, dataset: Dataset,
                  report: AnalysisReport) -> None:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    labels = dataset.taxonomy.display_labels()
    keys = [(s, lab, st) for s in dataset.subjects for lab in labels
            for st in STATES]

    with open(out / "estimates.csv", "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject", "map", "state", "status", "beta", "welch_beta",
                    "hurst", "stationary", "h_min", "gamma", "reference_shift",
                    "c1", "c2", "error"])
        for key in keys:
            if key in report.results:
                e = report.results[key].estimate
                w.writerow([key[0], key[1], key[2], "ok", _fmt(e.beta),
                            _fmt(e.diagnostics.get("welch_beta")),
                            _fmt(e.hurst), _fmt(e.stationary), _fmt(e.h_min),
                            _fmt(e.gamma), str(e.reference_shift), _fmt(e.c1),
                            _fmt(e.c2), ""])
            elif key in report.failures:
                w.writerow([key[0], key[1], key[2], "error"] + [""] * 9
                           + [report.failures[key]])

    with open(out / "spectra.csv", "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject", "map", "state", "octave", "frequency_hz",
                    "log2_power", "fitted_log2_power"])
        for key in keys:
            res = report.results.get(key)
            if res is None:
                continue
            for j, logp in zip(res.spectrum_octaves, res.spectrum_log2):
                freq = 3.0 * dataset.sampling_rate / (4.0 * 2.0**j)
                fitted = res.fit_slope * j + res.fit_intercept
                w.writerow([key[0], key[1], key[2], str(j), _fmt(freq),
                            _fmt(logp), _fmt(fitted)])

    with open(out / "dh_curves.csv", "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject", "map", "state", "h", "d"])
        for key in keys:
            res = report.results.get(key)
            if res is None:
                continue
            for h, d in res.estimate.spectrum:
                w.writerow([key[0], key[1], key[2], _fmt(h), _fmt(d)])

    with open(out / "pvalues.csv", "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["level", "map", "parameter", "test", "statistic", "p",
                    "p_corrected"])
        if report.battery is not None:
            for (level, unit, state, param, test, stat, p, p_corr) \
                    in report.battery.to_rows():
                w.writerow([f"{level}:{state}", unit, param, test,
                            _fmt(stat), _fmt(p), _fmt(p_corr)])

    doc = {
        "provenance": report.provenance,
        "dropped_subjects": list(report.dropped_subjects),
        "failures": {"/".join(k): v for k, v in sorted(report.failures.items())},
        "aggregate": _summary_json(report, dataset),
        "battery": (report.battery.to_json_dict()
                    if report.battery is not None else None),
    }
    with open(out / "group_report.json", "w", newline="\n",
              encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")
    with open(out / "config_resolved.json", "w", newline="\n",
              encoding="utf-8") as fh:
        fh.write(config.canonical_json())
        fh.write("\n")


def _summary_json(report: AnalysisReport, dataset: Dataset):
    if report.summary is None:
        return None
    labels = dataset.taxonomy.display_labels()
    s = report.summary
    per_map = {}
    for k, lab in enumerate(labels):
        per_map[lab] = {
            state: {param: s.map_means[k, j, i] for i, param in enumerate(PARAMS)}
            for j, state in enumerate(STATES)
        }
    return {
        "map_means": per_map,
        "class_means": {c: {state: {p: s.class_means[c][j, i]
                                    for i, p in enumerate(PARAMS)}
                            for j, state in enumerate(STATES)}
                        for c in s.class_means},
        "class_differences": {c: {p: s.class_differences[c][i]
                                  for i, p in enumerate(PARAMS)}
                              for c in s.class_differences},
        "network_means": {t: {state: {p: s.network_means[t][j, i]
                                      for i, p in enumerate(PARAMS)}
                              for j, state in enumerate(STATES)}
                          for t in s.network_means},
        "artifact_means": {t: {state: {p: s.artifact_means[t][j, i]
                                       for i, p in enumerate(PARAMS)}
                               for j, state in enumerate(STATES)}
                           for t in s.artifact_means},
    }


def load_estimates_csv(path, taxonomy: MapTaxonomy) -> GroupTable:
    """Rebuild a GroupTable from a pipeline estimates.csv.

    Subjects with any missing or failed cell are dropped listwise with a
    warning.
    """
    labels = taxonomy.display_labels()
    label_idx = {lab: k for k, lab in enumerate(labels)}
    cells = {}
    subjects = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"subject", "map", "state", "status", "c1", "c2", "hurst"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise DataFormatError(
                f"{path}: estimates CSV must carry columns {sorted(required)}"
            )
        for row in reader:
            sid = row["subject"]
            if sid not in subjects:
                subjects.append(sid)
            if row["status"] != "ok":
                continue
            if row["map"] not in label_idx:
                raise DataFormatError(
                    f"{path}: unknown map label {row['map']!r} for the taxonomy"
                )
            if row["state"] not in STATES:
                raise DataFormatError(f"{path}: unknown state {row['state']!r}")
            cells[(sid, label_idx[row["map"]], STATES.index(row["state"]))] = (
                float(row["c1"]), float(row["c2"]), float(row["hurst"]))
    complete = [s for s in subjects
                if all((s, k, j) in cells
                       for k in range(taxonomy.n_maps) for j in range(2))]
    dropped = sorted(set(subjects) - set(complete))
    if dropped:
        warnings.warn(f"dropped incomplete subject(s): {dropped}", stacklevel=2)
    if len(complete) < 3:
        raise DataFormatError(
            f"{path}: only {len(complete)} complete subject(s); need >= 3"
        )
    est = np.empty((len(complete), taxonomy.n_maps, 2, len(PARAMS)))
    for si, s in enumerate(complete):
        for k in range(taxonomy.n_maps):
            for j in range(2):
                est[si, k, j, :] = cells[(s, k, j)]
    return GroupTable(estimates=est, taxonomy=taxonomy,
                      subjects=tuple(complete))
