"""Scenario presets, their configuration file, and CSV output.

All presets analyse the window ``[-window / (gamma + eps), 0]`` before
Alice's conditioning click at ``t = 0``; the last row is ``0-``.
"""

from dataclasses import dataclass, fields, replace
from pathlib import Path
import csv
import io
import math

import numpy as np

from .errors import ConfigError
from .fpe import stationary_distribution
from .pre_solver import STATE_LABELS, occupations, published_ensemble
from .qubit import ModelParams, bloch_array
from .retrofilter import pre_jump_effect_path
from .smoother import (
    adaptive_smooth,
    effect_weights,
    expected_cost_filtered_under_smoothing,
    homodyne_smooth,
    mc_smooth,
    smoothed_cost,
    swv_negativity_scan,
)
from .trajectories import TimeGrid, filtered_ground_path, sample_ensemble

PRESETS = {
    "classical-z": "classical",
    "classical-purity": "classical",
    "classical-cost": "classical",
    "homodyne-z": "homodyne",
    "adaptive-bloch": "adaptive",
    "pre-distributions": "adaptive",
    "cost-comparison": "adaptive",
    "swv-demo": "swv-demo",
    "pre-solve": "pre-solve",
}


@dataclass(frozen=True)
class ScenarioConfig:
    """Flat configuration of one run.

    ``trajectories > 0`` adds a Monte Carlo cross-check to the homodyne
    preset; ``mc_window`` is the length (in units of ``1 / (gamma + eps)``)
    of the window that check covers.
    """

    preset: str = "classical-z"
    gamma: float = 1.0
    epsilon: float = 0.05
    delta: float = 0.0
    delta_zero_limit: bool = True
    window: float = 10.0
    dt: float = 1e-3
    seed: int = 0
    trajectories: int = 0
    mc_window: float = 2.0
    fpe_points: int = 512
    workers: int = 1
    out: str = "."

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigError(f"preset: unknown value {self.preset!r}; choose from {sorted(PRESETS)}")
        for name in ("window", "dt", "mc_window"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name}: must be > 0")
        if self.trajectories < 0 or self.workers < 1:
            raise ConfigError("trajectories must be >= 0 and workers >= 1")

    @property
    def scheme(self) -> str:
        return PRESETS[self.preset]

    def params(self) -> ModelParams:
        try:
            return ModelParams(self.gamma, self.epsilon, self.delta, self.delta_zero_limit)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def grid(self) -> TimeGrid:
        return TimeGrid.pre_jump_window(self.params(), self.dt, self.window)

    # --- text form ---

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {repr(v) if isinstance(v, float) else str(v).lower() if isinstance(v, bool) else v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "ScenarioConfig":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key in values:
                raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
            values[key] = (value, f"{source}:{lineno}")
        return cls._build({k: v for k, (v, _) in values.items()}, {k: loc for k, (_, loc) in values.items()})

    @classmethod
    def _build(cls, raw: dict, where: dict | None = None, base=None):
        types = {f.name: f.type for f in fields(cls)}
        parsed = {}
        for key, value in raw.items():
            loc = f"{where[key]}: " if where and key in where else ""
            if key not in types:
                raise ConfigError(f"{loc}unknown key {key!r}")
            parsed[key] = _convert(key, value, types[key], loc)
        return replace(base, **parsed) if base is not None else cls(**parsed)

    def with_overrides(self, overrides: dict) -> "ScenarioConfig":
        """Apply ``{key: text value}`` overrides, as given on the command line."""
        return self._build(overrides, {k: "--param" for k in overrides}, base=self)

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
        return cls.from_text(text, str(path))

    def save(self, path):
        Path(path).write_text(self.to_text())


def _convert(key, value, typ, loc):
    typ = typ if isinstance(typ, type) else {"float": float, "int": int, "bool": bool, "str": str}.get(str(typ), str)
    try:
        if typ is bool:
            low = value.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return low in ("true", "1", "yes")
        if typ is int:
            return int(value)
        if typ is float:
            v = float(value)
            if not math.isfinite(v):
                raise ValueError(value)
            return v
        return value
    except ValueError:
        raise ConfigError(f"{loc}{key}: cannot parse {value!r} as {typ.__name__}") from None


# --- datasets ---------------------------------------------------------------


@dataclass
class Dataset:
    name: str
    columns: list
    rows: list

    def column(self, name) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows])


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "0" if v == 0 else f"{v:.9g}"
    return str(v)


def dataset_to_csv(dataset: Dataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(dataset.columns)
    for row in dataset.rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def emit_csv(dataset: Dataset, path) -> Path:
    """Write ``dataset`` with 9 significant digits and LF line endings."""
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            fh.write(dataset_to_csv(dataset))
    except OSError as exc:
        raise ConfigError(f"{path}: cannot write output ({exc.strerror})") from exc
    return path


# --- shared analysis ------------------------------------------------------


@dataclass
class PreJumpAnalysis:
    """Everything the pre-click presets share, on one time grid."""

    times: np.ndarray
    effects: np.ndarray
    rho_F: np.ndarray
    rho_S_classical: np.ndarray
    rho_S_homodyne: np.ndarray
    rho_S_adaptive: np.ndarray


def pre_jump_analysis(cfg: ScenarioConfig, schemes=("classical", "homodyne", "adaptive")) -> PreJumpAnalysis:
    params = cfg.params()
    grid = cfg.grid()
    effects = pre_jump_effect_path(params, grid.n_steps, grid.dt)
    p_e = 1.0 - filtered_ground_path(params, grid)
    rho_F = np.zeros((grid.n_steps + 1, 2, 2), dtype=complex)
    rho_F[:, 0, 0] = p_e
    rho_F[:, 1, 1] = 1 - p_e
    cl = hom = ad = None
    if "classical" in schemes:
        # co-diagonal case: diagonal entries multiply
        num = np.stack([effects[:, 0, 0].real * p_e, effects[:, 1, 1].real * (1 - p_e)], axis=1)
        num /= num.sum(axis=1, keepdims=True)
        cl = np.zeros_like(rho_F)
        cl[:, 0, 0] = num[:, 0]
        cl[:, 1, 1] = num[:, 1]
    if "homodyne" in schemes:
        hom = homodyne_smooth(stationary_distribution(params, cfg.fpe_points), effects)
    if "adaptive" in schemes:
        ad = adaptive_smooth(published_ensemble(params), effects)
    return PreJumpAnalysis(grid.times, effects, rho_F, cl, hom, ad)


def cost_ordering_report(times, cost_classical, cost_homodyne, cost_adaptive) -> dict:
    """Where ``homodyne <= adaptive <= classical`` holds, and where curves cross."""
    t = np.asarray(times)
    ordered = (cost_homodyne <= cost_adaptive) & (cost_adaptive <= cost_classical)
    report = {"fraction_ordered": float(ordered.mean())}
    fails = np.flatnonzero(~ordered)
    report["reversal_start_t"] = float(t[fails[0]]) if fails.size else float("nan")
    report["reversal_is_terminal"] = bool(fails.size == 0 or np.all(~ordered[fails[0]:]))
    pairs = {
        "homodyne_adaptive": cost_homodyne - cost_adaptive,
        "adaptive_classical": cost_adaptive - cost_classical,
        "homodyne_classical": cost_homodyne - cost_classical,
    }
    for name, d in pairs.items():
        idx = np.flatnonzero((d[:-1] <= 0) & (d[1:] > 0))
        if idx.size:
            i = idx[0]
            # linear interpolation of the sign change
            report[f"crossover_{name}_t"] = float(t[i] + (t[i + 1] - t[i]) * (-d[i]) / (d[i + 1] - d[i]))
        else:
            report[f"crossover_{name}_t"] = float("nan")
    return report


# --- presets ------------------------------------------------------------------


def _rows(*cols):
    return [tuple(float(c[i]) for c in cols) for i in range(len(cols[0]))]


def _homodyne_mc(cfg: ScenarioConfig, params: ModelParams) -> Dataset:
    grid = TimeGrid.pre_jump_window(params, cfg.dt, cfg.mc_window)
    effects = pre_jump_effect_path(params, grid.n_steps, grid.dt)
    stride = max(1, grid.n_steps // 200)
    ck = sorted(set(range(0, grid.n_steps + 1, stride)) | {grid.n_steps})
    ens = sample_ensemble("homodyne", params, grid, cfg.trajectories, cfg.seed, checkpoints=ck, workers=cfg.workers, fpe_points=cfg.fpe_points)
    dm = ens.density_matrices()
    rows = []
    for j, k in enumerate(ck):
        res = mc_smooth(dm[:, j], effect_weights(dm[:, j], effects[k]))
        x, y, z = bloch_array(res.rho)
        rows.append((float(grid.times[k]), x, y, z, res.effective_sample_size))
    return Dataset("homodyne-z-mc", ["t", "x_S_mc", "y_S_mc", "z_S_mc", "ess"], rows)


def run_scenario(cfg: ScenarioConfig) -> list:
    """Compute the datasets of ``cfg.preset``.  Deterministic given the config."""
    params = cfg.params()
    p = cfg.preset
    if p in ("classical-z", "classical-purity", "classical-cost"):
        a = pre_jump_analysis(cfg, ("classical",))
        if p == "classical-z":
            return [Dataset(p, ["t", "wp_F_e", "wp_S_e"], _rows(a.times, a.rho_F[:, 0, 0].real, a.rho_S_classical[:, 0, 0].real))]
        if p == "classical-purity":
            return [Dataset(p, ["t", "purity_F", "purity_S"], _rows(a.times, 1 - smoothed_cost(a.rho_F), 1 - smoothed_cost(a.rho_S_classical)))]
        cost_F = expected_cost_filtered_under_smoothing(a.rho_F, a.rho_S_classical)
        return [Dataset(p, ["t", "cost_F", "cost_S"], _rows(a.times, cost_F, smoothed_cost(a.rho_S_classical)))]
    if p == "homodyne-z":
        a = pre_jump_analysis(cfg, ("classical", "homodyne"))
        bh = bloch_array(a.rho_S_homodyne)
        out = [Dataset(p, ["t", "z_F", "z_S_classical", "x_S_homodyne", "y_S_homodyne", "z_S_homodyne"],
                       _rows(a.times, bloch_array(a.rho_F)[:, 2], bloch_array(a.rho_S_classical)[:, 2], bh[:, 0], bh[:, 1], bh[:, 2]))]
        if cfg.trajectories > 0:
            out.append(_homodyne_mc(cfg, params))
        return out
    if p == "adaptive-bloch":
        a = pre_jump_analysis(cfg, ("adaptive",))
        bf = bloch_array(a.rho_F)
        ba = bloch_array(a.rho_S_adaptive)
        return [Dataset(p, ["t", "x_F", "z_F", "x_S", "y_S", "z_S"], _rows(a.times, bf[:, 0], bf[:, 2], ba[:, 0], ba[:, 1], ba[:, 2]))]
    if p == "cost-comparison":
        a = pre_jump_analysis(cfg)
        c_cl = smoothed_cost(a.rho_S_classical)
        c_h = smoothed_cost(a.rho_S_homodyne)
        c_a = smoothed_cost(a.rho_S_adaptive)
        ordered = (c_h <= c_a) & (c_a <= c_cl)
        rows = [(float(t), float(x), float(y), float(z), int(o)) for t, x, y, z, o in zip(a.times, c_cl, c_h, c_a, ordered)]
        report = cost_ordering_report(a.times, c_cl, c_h, c_a)
        summary = Dataset("cost-comparison-summary", ["metric", "value"], [(k, v) for k, v in report.items()])
        return [Dataset(p, ["t", "cost_classical", "cost_homodyne", "cost_adaptive", "ordered"], rows), summary]
    if p == "pre-distributions":
        pre = published_ensemble(params)
        dist = stationary_distribution(params, cfg.fpe_points)
        rows = [("classical", 0.0, params.steady_excited), ("classical", math.pi, 1 - params.steady_excited)]
        rows += [("homodyne", float(t), float(q)) for t, q in zip(dist.theta, dist.density * dist.dtheta)]
        rows += [("adaptive", float(t), float(q)) for t, q in zip(pre.angles, pre.occupations)]
        return [Dataset(p, ["scheme", "theta", "probability"], rows)]
    if p == "swv-demo":
        res = swv_negativity_scan()
        rf = bloch_array(res.rho_F)
        re_ = bloch_array(res.effect)
        return [Dataset(p, ["rho_F_x", "rho_F_z", "effect_x", "effect_z", "min_eigenvalue", "pairs_checked"],
                        [(rf[0], rf[2], re_[0], re_[2], res.min_eigenvalue, res.pairs_checked)])]
    return [pre_solve_dataset(params)]


def pre_solve_dataset(params: ModelParams, solutions=None) -> Dataset:
    """Table of the published cyclic PRE (or of ``solutions``) with WLO amplitudes."""
    sols = solutions
    if sols is None:
        ens = published_ensemble(params)
        sols = [(ens.angles, ens.wlos)]
    rows = []
    for s, (angles, wlos) in enumerate(sols):
        occ = occupations(angles, wlos, params)
        for label, th, q, w in zip(STATE_LABELS, angles, occ, wlos):
            rows.append((s, label, float(th), float(q), float(w[0]), float(w[1]), math.sin(th), math.cos(th)))
    return Dataset("pre-solve", ["solution", "state", "theta", "occupation", "mu_minus", "mu_plus", "x", "z"], rows)


def write_datasets(datasets, out_dir) -> list:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"{out}: cannot create output directory ({exc.strerror})") from exc
    return [emit_csv(d, out / f"{d.name}.csv") for d in datasets]
