"""Command-line interface.

Subcommands:
  single     exact closed-form solver (one waveguide, one PA, one Bob/Eve)
  train      online-train one scenario, emit the per-epoch trace CSV
  sweep      Monte-Carlo sweep over power / side / bobs / eves / sigma2
  heatmap    secrecy-rate map over Bob positions at fixed Eves
  cdf        empirical CDF of secrecy rates over scenarios
  gradcheck  finite-difference verification of the autodiff engine

Flags can also come from a ``key = value`` config file (--config); explicit
command-line flags win.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .channel import Scene
from .harness import (ExperimentConfig, dbm_to_watt, emit_csv, parse_config_file,
                      run_heatmap, run_point, run_sweep, sample_scene,
                      scenario_rng, solve_scenario)
from .metrics import NumeratorMode
from .singlewg import alternate_optimize

_CONFIG_KEYS = {
    "waveguides": int, "pas": int, "bobs": int, "eves": int,
    "fc": float, "neff": float, "noise_dbm": float, "spacing": float,
    "power_dbm": float, "side": float, "sigma2": float, "epochs": int,
    "mc": int, "seed": int, "mode": str, "numerator_mode": str,
    "an": lambda s: s.lower() not in ("0", "false", "no", "off"),
    "out": str,
}


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--waveguides", type=int, help="number of waveguides N")
    parser.add_argument("--pas", type=int, help="PAs per waveguide M")
    parser.add_argument("--bobs", type=int, help="number of legitimate users I")
    parser.add_argument("--eves", type=int, help="number of eavesdroppers K")
    parser.add_argument("--fc", type=float, help="carrier frequency (Hz)")
    parser.add_argument("--neff", type=float, help="waveguide refractive index")
    parser.add_argument("--noise-dbm", type=float, help="noise power (dBm)")
    parser.add_argument("--spacing", type=float, help="min PA spacing (m)")
    parser.add_argument("--power-dbm", type=float, help="transmit budget (dBm)")
    parser.add_argument("--side", type=float, help="room side length D (m)")
    parser.add_argument("--seed", type=int, help="base RNG seed")
    parser.add_argument("--epochs", type=int, help="training epochs")
    parser.add_argument("--numerator-mode", choices=["conservative", "nominal"],
                        help="worst-case SINR numerator treatment")
    parser.add_argument("--out", help="output CSV path (or directory)")


def _merged_config(args: argparse.Namespace) -> ExperimentConfig:
    values: dict = {}
    if args.config:
        raw = parse_config_file(args.config)
        for key, text in raw.items():
            if key not in _CONFIG_KEYS:
                raise SystemExit(f"unknown config key {key!r}")
            values[key] = _CONFIG_KEYS[key](text)
    cli_map = {
        "waveguides": args.waveguides, "pas": args.pas, "bobs": args.bobs,
        "eves": args.eves, "fc": args.fc, "neff": args.neff,
        "noise_dbm": args.noise_dbm, "spacing": args.spacing,
        "power_dbm": args.power_dbm, "side": args.side, "seed": args.seed,
        "epochs": args.epochs, "numerator_mode": args.numerator_mode,
        "out": args.out,
    }
    for key, val in cli_map.items():
        if val is not None:
            values[key] = val
    for attr in ("mode", "sigma2", "mc"):
        val = getattr(args, attr, None)
        if val is not None:
            values[attr] = val
    if getattr(args, "no_an", False):
        values["an"] = False
    cfg = ExperimentConfig()
    remap = {"waveguides": "num_waveguides", "pas": "pas_per_waveguide",
             "bobs": "num_bobs", "eves": "num_eves", "fc": "carrier_freq",
             "neff": "refractive_index", "spacing": "min_spacing",
             "mc": "mc_count", "an": "an_enabled", "out": "out_dir"}
    for key, val in values.items():
        if key == "numerator_mode":
            val = NumeratorMode(val)
        setattr(cfg, remap.get(key, key), val)
    return cfg


def _out_path(cfg: ExperimentConfig, default_name: str) -> str:
    out = cfg.out_dir
    if out and (os.path.isdir(out) or out.endswith(os.sep)):
        return os.path.join(out, default_name)
    if out and out != ".":
        return out
    return default_name


def _parse_xy(text: str) -> list[float]:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 2:
        raise SystemExit(f"expected 'x,y', got {text!r}")
    return [parts[0], parts[1], 0.0]


def _cmd_single(args) -> int:
    cfg = _merged_config(args)
    scene = Scene(side=cfg.side, height=cfg.height, num_waveguides=1,
                  pas_per_waveguide=1, bob_positions=[_parse_xy(args.bob)],
                  eve_positions=[_parse_xy(args.eve)],
                  noise_bob=dbm_to_watt(cfg.noise_dbm),
                  noise_eve=dbm_to_watt(cfg.noise_dbm),
                  carrier_freq=cfg.carrier_freq,
                  refractive_index=cfg.refractive_index,
                  power_budget=dbm_to_watt(cfg.power_dbm),
                  min_spacing=cfg.spacing())
    state = alternate_optimize(scene)
    print(f"pa_position_m = {state.x_pa:.9g}")
    print(f"signal_power_w = {state.w_power:.9g}")
    print(f"an_power_w = {state.an_power:.9g}")
    print(f"secrecy_rate_bpshz = {state.secrecy_rate:.9g}")
    print(f"iterations = {state.iterations}")
    if cfg.out_dir != ".":
        emit_csv(["x_pa", "w_power", "an_power", "secrecy_rate"],
                 [(state.x_pa, state.w_power, state.an_power,
                   state.secrecy_rate)], _out_path(cfg, "single.csv"))
    return 0


def _cmd_train(args) -> int:
    from .optimizer import train_scenario
    cfg = _merged_config(args)
    scene = sample_scene(cfg, scenario_rng(cfg.seed, 0))
    res = train_scenario(scene, cfg.mode, cfg.train_config(0))
    rows = [(epoch, res.sr_trace[epoch], res.loss_trace[epoch],
             res.pen1_trace[epoch], res.pen2_trace[epoch],
             res.pen3_trace[epoch], res.lr_trace[epoch])
            for epoch in range(len(res.sr_trace))]
    path = _out_path(cfg, "train_trace.csv")
    emit_csv(["epoch", "sr", "loss", "pen1", "pen2", "pen3", "lr"], rows, path)
    print(f"best_epoch = {res.best_epoch}")
    print(f"secrecy_rate_bpshz = {res.best_sr:.9g}")
    print(f"trace_csv = {path}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _merged_config(args)
    values = [float(v) for v in args.values.split(",")]
    table = run_sweep(cfg, args.axis, values)
    rows = []
    for value, agg in table:
        for idx, sr in enumerate(agg.values):
            row = [value, idx, sr]
            if agg.true_means is not None:
                row.append(agg.true_means[idx])
            rows.append(tuple(row))
    header = [args.axis, "scenario", "sr"]
    if table and table[0][1].true_means is not None:
        header.append("sr_true_mean")
    path = _out_path(cfg, f"sweep_{args.axis}.csv")
    emit_csv(header, rows, path)
    for value, agg in table:
        print(f"{args.axis} = {value:g}: mean_sr = {agg.mean:.6g}")
    print(f"sweep_csv = {path}")
    return 0


def _cmd_heatmap(args) -> int:
    cfg = _merged_config(args)
    eves = [_parse_xy(part) for part in args.eves_at.split(";")]
    grid = run_heatmap(cfg, args.grid, np.array(eves))
    path = _out_path(cfg, "heatmap.csv")
    emit_csv(["x", "y", "sr"], [tuple(row) for row in grid], path)
    print(f"cells = {len(grid)}")
    print(f"median_sr = {np.median(grid[:, 2]):.6g}")
    print(f"heatmap_csv = {path}")
    return 0


def _cmd_cdf(args) -> int:
    cfg = _merged_config(args)
    agg = run_point(cfg)
    path = _out_path(cfg, "cdf.csv")
    emit_csv(["sr", "cdf"], list(zip(agg.cdf_values, agg.cdf_levels)), path)
    print(f"mean_sr = {agg.mean:.6g}")
    print(f"cdf_csv = {path}")
    return 0


def _cmd_gradcheck(args) -> int:
    from .gradcheck import run_all
    results = run_all(samples_per_tensor=args.samples)
    failed = 0
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        print(f"[{status}] {res.name}: max rel err {res.max_err:.3e}")
        failed += 0 if res.passed else 1
    print(f"{len(results) - failed}/{len(results)} gradient checks passed")
    return 1 if failed else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pinchsec",
        description="Secrecy-rate optimization for pinching-antenna downlinks")
    sub = parser.add_subparsers(dest="command", required=True)

    p_single = sub.add_parser("single", help="closed-form scalar solver")
    p_single.add_argument("--bob", required=True, help="Bob position 'x,y'")
    p_single.add_argument("--eve", required=True, help="Eve position 'x,y'")
    _common_flags(p_single)
    p_single.set_defaults(func=_cmd_single)

    p_train = sub.add_parser("train", help="train one scenario")
    p_train.add_argument("--mode", choices=["perfect", "robust"])
    p_train.add_argument("--sigma2", type=float, help="position-error variance")
    p_train.add_argument("--no-an", action="store_true",
                         help="disable artificial noise (baseline)")
    _common_flags(p_train)
    p_train.set_defaults(func=_cmd_train)

    p_sweep = sub.add_parser("sweep", help="Monte-Carlo sweep")
    p_sweep.add_argument("--axis", required=True,
                         choices=["power", "side", "bobs", "eves", "sigma2"])
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated sweep values")
    p_sweep.add_argument("--mc", type=int, help="scenarios per sweep value")
    p_sweep.add_argument("--mode", choices=["perfect", "robust"])
    p_sweep.add_argument("--sigma2", type=float)
    p_sweep.add_argument("--no-an", action="store_true")
    _common_flags(p_sweep)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_heat = sub.add_parser("heatmap", help="secrecy map over Bob positions")
    p_heat.add_argument("--grid", type=int, default=11, help="grid resolution")
    p_heat.add_argument("--eves-at", default="2.5,1.25;2.5,3.75",
                        help="semicolon-separated Eve positions 'x,y;x,y'")
    _common_flags(p_heat)
    p_heat.set_defaults(func=_cmd_heatmap)

    p_cdf = sub.add_parser("cdf", help="empirical CDF over scenarios")
    p_cdf.add_argument("--mc", type=int, help="number of scenarios")
    p_cdf.add_argument("--mode", choices=["perfect", "robust"])
    p_cdf.add_argument("--sigma2", type=float)
    p_cdf.add_argument("--no-an", action="store_true")
    _common_flags(p_cdf)
    p_cdf.set_defaults(func=_cmd_cdf)

    p_grad = sub.add_parser("gradcheck", help="autodiff finite-difference suite")
    p_grad.add_argument("--samples", type=int, default=30,
                        help="sampled coordinates per parameter tensor")
    _common_flags(p_grad)
    p_grad.set_defaults(func=_cmd_gradcheck)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
