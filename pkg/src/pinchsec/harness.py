"""Scenario sampling, Monte-Carlo drivers, and CSV output.

Experiments place Bobs and Eves uniformly in the room, solve each scenario
(closed form when the system is scalar, otherwise the online trainer), and
aggregate secrecy rates over scenarios.  Sweeps vary one axis (power, room
side, user counts, uncertainty) with per-scenario RNG streams derived from
(seed, scenario index) so paired comparisons can reuse identical scenes.
All dBm -> watt conversion happens here; the core modules work in watts.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .channel import Scene, channel_matrices, free_space_wavelength
from .metrics import NumeratorMode, Solution, robust_secrecy_rate, secrecy_rate
from .optimizer import TrainConfig, TrainResult, train_scenario
from .robust import UncertaintySpec
from .singlewg import alternate_optimize


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) * 1e-3


def watt_to_dbm(watt: float) -> float:
    return 10.0 * np.log10(watt * 1e3)


@dataclass
class ExperimentConfig:
    """Scene template plus experiment controls (defaults: the standard setup)."""

    side: float = 5.0
    height: float = 2.0
    num_waveguides: int = 2
    pas_per_waveguide: int = 4
    num_bobs: int = 1
    num_eves: int = 1
    noise_dbm: float = -90.0
    power_dbm: float = 0.0
    carrier_freq: float = 28e9
    refractive_index: float = 1.4
    min_spacing: Optional[float] = None     # None: lambda/2 anti-coupling default
    mode: str = "perfect"
    an_enabled: bool = True
    numerator_mode: NumeratorMode = NumeratorMode.CONSERVATIVE
    sigma2: float = 0.05
    epochs: int = 1500
    hidden: tuple = (256, 256, 256, 256)
    mc_count: int = 20
    seed: int = 0
    true_eve_draws: int = 10    # robust mode: sampled true positions per scenario
    out_dir: str = "."

    def spacing(self) -> float:
        if self.min_spacing is not None:
            return self.min_spacing
        return free_space_wavelength(self.carrier_freq) / 2.0

    def train_config(self, scenario_seed: int) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, sigma2=self.sigma2,
                           an_enabled=self.an_enabled,
                           numerator_mode=self.numerator_mode,
                           hidden=self.hidden, seed=scenario_seed)


def scenario_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                        spawn_key=(index,)))


def sample_scene(config: ExperimentConfig, rng: np.random.Generator) -> Scene:
    """Draw Bob/Eve floor positions uniformly; re-draw near-coincident sets."""
    if config.side <= 0.0:
        raise ValueError("room side must be positive")
    total = config.num_bobs + config.num_eves
    while True:
        xy = rng.uniform(0.0, config.side, size=(total, 2))
        diff = xy[:, None, :] - xy[None, :, :]
        dist = np.sqrt(np.sum(diff * diff, axis=-1))
        np.fill_diagonal(dist, np.inf)
        if np.min(dist) > 1e-6:
            break
    pos = np.column_stack([xy, np.zeros(total)])
    return Scene(side=config.side, height=config.height,
                 num_waveguides=config.num_waveguides,
                 pas_per_waveguide=config.pas_per_waveguide,
                 bob_positions=pos[:config.num_bobs],
                 eve_positions=pos[config.num_bobs:],
                 noise_bob=dbm_to_watt(config.noise_dbm),
                 noise_eve=dbm_to_watt(config.noise_dbm),
                 carrier_freq=config.carrier_freq,
                 refractive_index=config.refractive_index,
                 power_budget=dbm_to_watt(config.power_dbm),
                 min_spacing=config.spacing())


def _sample_true_offsets(sigma_xyz: np.ndarray, count: int,
                         rng: np.random.Generator) -> np.ndarray:
    """Uniform draws from the position ellipsoid {dp: dp^T Sigma^-1 dp <= 1}."""
    active = sigma_xyz > 0.0
    dim = int(np.sum(active))
    out = np.zeros((count, 3))
    if dim == 0:
        return out
    g = rng.normal(size=(count, dim))
    u = g / np.linalg.norm(g, axis=1, keepdims=True)
    radius = rng.uniform(size=count) ** (1.0 / dim)
    out[:, active] = radius[:, None] * u * np.sqrt(sigma_xyz[active])[None, :]
    return out


@dataclass
class ScenarioResult:
    """One solved scenario: certified and (robust) true-position secrecy rates."""

    sr: float
    sr_trace: Optional[np.ndarray] = None
    sr_true_mean: Optional[float] = None
    sr_true_min: Optional[float] = None
    solution: Optional[Solution] = None


def solve_scenario(scene: Scene, config: ExperimentConfig,
                   scenario_index: int) -> ScenarioResult:
    """Solve one scene: closed form for the scalar system, trained otherwise.

    Robust mode treats the scene's Eve positions as estimates, reports the
    clamped certified worst-case rate, and additionally evaluates the true
    secrecy rate at positions sampled inside the error ellipsoid.
    """
    scalar = (scene.num_waveguides == 1 and scene.pas_per_waveguide == 1
              and scene.num_bobs == 1 and scene.num_eves == 1)
    if config.mode == "perfect" and scalar:
        state = alternate_optimize(scene)
        return ScenarioResult(sr=state.secrecy_rate)
    result = train_scenario(scene, config.mode, config.train_config(scenario_index))
    if config.mode == "perfect":
        return ScenarioResult(sr=result.best_sr, sr_trace=result.sr_trace,
                              solution=result.solution)
    sigma_xyz = np.array([config.sigma2, config.sigma2, 0.0])
    unc = UncertaintySpec.build(scene, result.solution.layout, sigma_xyz)
    channels_hat = channel_matrices(scene, result.solution.layout)
    certified = robust_secrecy_rate(channels_hat, result.solution, scene, unc,
                                    config.numerator_mode, clamp=True)
    rng = scenario_rng(config.seed ^ 0x5EED, scenario_index)
    true_srs = []
    for _ in range(config.true_eve_draws):
        offsets = np.vstack([_sample_true_offsets(sigma_xyz, 1, rng)
                             for _ in range(scene.num_eves)])
        true_scene_eves = scene.eve_positions + offsets
        true_scene_eves[:, :2] = np.clip(true_scene_eves[:, :2], 0.0, scene.side)
        true_scene = Scene(scene.side, scene.height, scene.num_waveguides,
                           scene.pas_per_waveguide, scene.bob_positions,
                           true_scene_eves, scene.noise_bob, scene.noise_eve,
                           scene.carrier_freq, scene.refractive_index,
                           scene.power_budget, scene.min_spacing)
        true_channels = channel_matrices(true_scene, result.solution.layout)
        true_srs.append(secrecy_rate(true_channels, result.solution, true_scene))
    return ScenarioResult(sr=certified, sr_trace=result.sr_trace,
                          sr_true_mean=float(np.mean(true_srs)),
                          sr_true_min=float(np.min(true_srs)),
                          solution=result.solution)


@dataclass
class McAggregate:
    """Monte-Carlo aggregate over scenarios at one sweep point."""

    values: np.ndarray                    # per-scenario secrecy rates
    mean: float
    cdf_values: np.ndarray                # sorted values
    cdf_levels: np.ndarray                # nondecreasing in (0, 1]
    mean_trace: Optional[np.ndarray]      # per-epoch mean over scenarios
    true_means: Optional[np.ndarray] = None

    @classmethod
    def from_results(cls, results: list[ScenarioResult]) -> "McAggregate":
        values = np.array([r.sr for r in results])
        order = np.sort(values)
        levels = np.arange(1, len(values) + 1) / len(values)
        traces = [r.sr_trace for r in results if r.sr_trace is not None]
        mean_trace = np.mean(np.stack(traces), axis=0) if traces else None
        true_means = None
        if all(r.sr_true_mean is not None for r in results):
            true_means = np.array([r.sr_true_mean for r in results])
        return cls(values, float(values.mean()), order, levels, mean_trace,
                   true_means)

    def quantile(self, q: float) -> float:
        return float(np.quantile(self.values, q))


_SWEEP_AXES = ("power", "side", "bobs", "eves", "sigma2")


def _config_at(config: ExperimentConfig, axis: str, value: float) -> ExperimentConfig:
    if axis == "power":
        return replace(config, power_dbm=float(value))
    if axis == "side":
        return replace(config, side=float(value))
    if axis == "bobs":
        return replace(config, num_bobs=int(value))
    if axis == "eves":
        return replace(config, num_eves=int(value))
    if axis == "sigma2":
        return replace(config, sigma2=float(value), mode="robust")
    raise ValueError(f"unknown sweep axis {axis!r}; expected one of {_SWEEP_AXES}")


def run_point(config: ExperimentConfig) -> McAggregate:
    """Solve mc_count scenarios at a fixed configuration."""
    if config.mc_count < 1:
        raise ValueError("mc_count must be at least 1")
    results = []
    for idx in range(config.mc_count):
        scene = sample_scene(config, scenario_rng(config.seed, idx))
        results.append(solve_scenario(scene, config, idx))
    return McAggregate.from_results(results)


def run_sweep(config: ExperimentConfig, axis: str,
              values) -> list[tuple[float, McAggregate]]:
    """One aggregate per sweep value; scenario RNG streams are shared across
    values so points are paired wherever the geometry allows."""
    values = list(values)
    if not values:
        raise ValueError("sweep values must be nonempty")
    return [(float(v), run_point(_config_at(config, axis, v))) for v in values]


def run_heatmap(config: ExperimentConfig, grid_resolution: int,
                eve_positions: np.ndarray) -> np.ndarray:
    """Secrecy rate with Bob placed at every node of an R x R floor grid.

    Returns rows (x, y, sr) in row-major order (y fastest).  Eves are fixed;
    a Bob landing exactly on an Eve yields zero secrecy rate by symmetry.
    """
    if config.mode != "perfect":
        raise ValueError("heatmap runs under perfect CSI")
    eve_positions = np.atleast_2d(np.asarray(eve_positions, dtype=float))
    if eve_positions.shape[1] == 2:
        eve_positions = np.column_stack([eve_positions,
                                         np.zeros(len(eve_positions))])
    axis_pts = np.linspace(0.0, config.side, grid_resolution)
    rows = []
    for ix, x in enumerate(axis_pts):
        for iy, y in enumerate(axis_pts):
            scene = Scene(side=config.side, height=config.height,
                          num_waveguides=config.num_waveguides,
                          pas_per_waveguide=config.pas_per_waveguide,
                          bob_positions=[[x, y, 0.0]],
                          eve_positions=eve_positions,
                          noise_bob=dbm_to_watt(config.noise_dbm),
                          noise_eve=dbm_to_watt(config.noise_dbm),
                          carrier_freq=config.carrier_freq,
                          refractive_index=config.refractive_index,
                          power_budget=dbm_to_watt(config.power_dbm),
                          min_spacing=config.spacing())
            if np.min(np.linalg.norm(eve_positions[:, :2] - np.array([x, y]),
                                     axis=1)) < 1e-12:
                rows.append((x, y, 0.0))   # co-located Bob/Eve: zero by symmetry
                continue
            result = solve_scenario(scene, config, ix * grid_resolution + iy)
            rows.append((x, y, result.sr))
    return np.array(rows)


def emit_csv(header: list[str], rows, path: str) -> None:
    """UTF-8 comma-separated output, one record per row, 9 significant digits."""
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fields = []
                for cell in row:
                    if isinstance(cell, (float, np.floating)):
                        fields.append(format(float(cell), ".9g"))
                    else:
                        fields.append(str(cell))
                fh.write(",".join(fields) + "\n")
    except OSError as exc:
        raise OSError(f"failed writing CSV to {path!r}: {exc}") from exc


def read_csv(path: str) -> tuple[list[str], list[list[str]]]:
    with open(path, encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    header = lines[0].split(",")
    return header, [line.split(",") for line in lines[1:]]


def parse_config_file(path: str) -> dict[str, str]:
    """Flat ``key = value`` pairs, one per line; ``#`` starts a comment."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = stripped.split("=", 1)
            out[key.strip()] = value.strip()
    return out
