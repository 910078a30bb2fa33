"""Command-line surface: estimate, simulate, and Monte Carlo summaries."""

from __future__ import annotations

import argparse
import dataclasses
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .estimators import (
    alpha_two_step,
    cross_sectional_fgls,
    fgls,
    iterated_fgls,
    joint_breve,
    ols,
    ugls,
)
from .exceptions import DimensionError, PanelError, ParseError
from .inference import HacSpec, hac_cov_breve, hac_cov_fgls, wald_tests
from .io import (
    dgp_from_config,
    load_config,
    load_panel_csv,
    write_estimates_csv,
    write_mc_csv,
    write_panel_csv,
    write_truth_csv,
)
from .panel import dual_panel, oracle_weight, transform
from .simulation import DgpSpec, run_mc, simulate

__all__ = ["RunConfig", "run_cli", "main", "METHODS"]

METHODS = ("ols", "ugls", "fgls", "iter", "breve", "alpha2", "xsec")
_COMMANDS = ("estimate", "simulate", "mc")
_RUN_KEYS = frozenset({"input", "out", "truth_out", "method", "steps", "bandwidth", "reps"})


@dataclass(frozen=True)
class RunConfig:
    """One validated command-line invocation.

    ``steps`` is the iteration count for the multi-step methods (None
    means each method's own default); ``bandwidth`` switches HAC output
    on for the estimate command; ``dgp`` and ``reps`` drive the
    simulate and mc commands.
    """

    command: str
    output_path: str
    input_path: str | None = None
    truth_path: str | None = None
    method: str = "fgls"
    steps: int | None = None
    bandwidth: int | None = None
    dgp: DgpSpec | None = None
    reps: int | None = None

    def __post_init__(self) -> None:
        if self.command not in _COMMANDS:
            raise ParseError(f"unknown command {self.command!r}")
        if self.method not in METHODS:
            raise ParseError(f"method must be one of {', '.join(METHODS)}, got {self.method!r}")
        if self.steps is not None and self.steps < 1:
            raise ParseError("steps must be at least 1")
        if not self.output_path:
            raise ParseError("an output path is required (--out)")
        if self.command == "estimate" and not self.input_path:
            raise ParseError("estimate requires an input panel (--input)")
        if self.command in ("simulate", "mc") and self.dgp is None:
            raise ParseError(f"{self.command} requires generator settings (--N and --T)")
        if self.command == "mc" and (self.reps is None or self.reps < 1):
            raise ParseError("mc requires a positive replication count (--reps)")


def _fit(config: RunConfig, panel):
    """Run the selected estimator; returns (estimate, inference or None)."""
    method = config.method
    if method == "xsec":
        dual = dual_panel(panel)
        est = cross_sectional_fgls(dual, steps=config.steps or 1)
        inference_args = (transform(dual), est)
    elif method == "breve":
        est = joint_breve(panel)
        inference_args = (panel, est)
    elif method == "alpha2":
        base = iterated_fgls(transform(panel), config.steps or 1)
        est = alpha_two_step(panel, base)
        inference_args = None
    else:
        tp = transform(panel)
        if method == "ols":
            est = ols(tp)
        elif method == "fgls":
            est = fgls(tp)
        elif method == "iter":
            est = iterated_fgls(tp, config.steps or 4)
        else:
            est = ugls(tp, _oracle_weight_from_config(config, panel, tp))
        inference_args = (tp, est)
    if config.bandwidth is None:
        return est, None
    if inference_args is None:
        raise ParseError(
            "HAC output is not defined for the two-step projection; "
            "use --method breve for joint inference"
        )
    spec = HacSpec(bandwidth=config.bandwidth)
    if method == "breve":
        inf = hac_cov_breve(*inference_args, spec)
    else:
        inf = hac_cov_fgls(*inference_args, spec)
    return est, dataclasses.replace(inf, wald=wald_tests(est, inf))


def _oracle_weight_from_config(config: RunConfig, panel, tp):
    """Oracle weight for --method ugls, rebuilt from the generator config.

    The oracle weight depends on the latent covariance structure, which
    panel files do not carry; it can only be reconstructed by replaying
    the generator settings (n, t, seed, ...) that produced the input.
    """
    if config.dgp is None:
        raise ParseError(
            "ugls needs the generator config that produced the input "
            "(pass --config with the simulate settings)"
        )
    sim_panel, structure, _ = simulate(config.dgp)
    if sim_panel.y.shape != panel.y.shape or not (
        np.array_equal(sim_panel.y, panel.y)
        and np.array_equal(sim_panel.x, panel.x)
        and np.array_equal(sim_panel.d, panel.d)
    ):
        raise DimensionError(
            "input panel does not match the configured generator draw; "
            "ugls is only defined for panels the toolkit simulated"
        )
    return oracle_weight(structure, tp.complement)


def _run_estimate(config: RunConfig) -> None:
    panel = load_panel_csv(config.input_path)
    est, inf = _fit(config, panel)
    write_estimates_csv(est, inf, config.output_path)


def _run_simulate(config: RunConfig) -> None:
    panel, _, truth = simulate(config.dgp)
    write_panel_csv(panel, config.output_path)
    truth_path = config.truth_path
    if truth_path is None:
        out = Path(config.output_path)
        truth_path = str(out.with_name(out.stem + "_truth" + (out.suffix or ".csv")))
    write_truth_csv(truth, truth_path)


def _run_mc(config: RunConfig) -> None:
    summary = run_mc(config.dgp, config.reps, j=config.steps or 4)
    write_mc_csv(summary, config.output_path)


def run_cli(config: RunConfig) -> int:
    """Execute one command; returns the process exit status."""
    runner = {"estimate": _run_estimate, "simulate": _run_simulate, "mc": _run_mc}
    try:
        runner[config.command](config)
    except (PanelError, OSError) as exc:
        print(f"panelgls: error: {exc}", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="panelgls",
        description="Per-unit GLS estimation for panels with cross-sectionally dependent errors.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="fit a method to a panel CSV")
    est.add_argument("--config", help="flat key = value settings file")
    est.add_argument("--input", help="input panel CSV (long format)")
    est.add_argument("--method", choices=METHODS, help="estimator (default fgls)")
    est.add_argument("--steps", type=int, help="iteration count for iter/alpha2/xsec")
    est.add_argument("--bandwidth", type=int, help="HAC lag count; enables se/t/W output")
    est.add_argument("--out", help="output estimates CSV")

    sim = sub.add_parser("simulate", help="draw a synthetic panel and its truth file")
    sim.add_argument("--config", help="flat key = value settings file")
    sim.add_argument("--N", type=int, help="cross-section size")
    sim.add_argument("--T", type=int, help="time-series length")
    sim.add_argument("--seed", type=int, help="generator seed")
    sim.add_argument("--out", help="output panel CSV")
    sim.add_argument("--truth-out", help="output truth CSV (default <out>_truth.csv)")

    mc = sub.add_parser("mc", help="Monte Carlo summary over fresh panel draws")
    mc.add_argument("--config", help="flat key = value settings file")
    mc.add_argument("--N", type=int, help="cross-section size")
    mc.add_argument("--T", type=int, help="time-series length")
    mc.add_argument("--seed", type=int, help="generator seed")
    mc.add_argument("--reps", type=int, help="replication count")
    mc.add_argument("--steps", type=int, help="iteration count for the iter estimator")
    mc.add_argument("--out", help="output summary CSV")
    return parser


def _config_int(run_cfg: dict[str, str], key: str) -> int | None:
    if key not in run_cfg:
        return None
    try:
        return int(run_cfg[key])
    except ValueError:
        raise ParseError(f"config key {key!r} must be an integer, got {run_cfg[key]!r}") from None


def _config_from_args(argv) -> RunConfig:
    args = _build_parser().parse_args(argv)
    cfg = load_config(args.config) if args.config else {}
    dgp_keys = {f.name for f in dataclasses.fields(DgpSpec)}
    dgp_cfg = {k: v for k, v in cfg.items() if k in dgp_keys}
    run_cfg = {k: v for k, v in cfg.items() if k not in dgp_keys}
    unknown = set(run_cfg) - _RUN_KEYS
    if unknown:
        raise ParseError(f"unknown config keys: {', '.join(sorted(unknown))}")

    for flag, key in (("N", "n"), ("T", "t"), ("seed", "seed")):
        value = getattr(args, flag, None)
        if value is not None:
            dgp_cfg[key] = str(value)
    dgp = dgp_from_config(dgp_cfg) if dgp_cfg else None

    method = getattr(args, "method", None) or run_cfg.get("method", "fgls")
    steps = getattr(args, "steps", None)
    if steps is None:
        steps = _config_int(run_cfg, "steps")
    bandwidth = getattr(args, "bandwidth", None)
    if bandwidth is None:
        bandwidth = _config_int(run_cfg, "bandwidth")
    reps = getattr(args, "reps", None)
    if reps is None:
        reps = _config_int(run_cfg, "reps")

    return RunConfig(
        command=args.command,
        output_path=getattr(args, "out", None) or run_cfg.get("out", ""),
        input_path=getattr(args, "input", None) or run_cfg.get("input"),
        truth_path=getattr(args, "truth_out", None) or run_cfg.get("truth_out"),
        method=method,
        steps=steps,
        bandwidth=bandwidth,
        dgp=dgp,
        reps=reps,
    )


def main(argv=None) -> int:
    """Console entry point: parse arguments, run, return the exit status."""
    try:
        config = _config_from_args(argv)
    except (PanelError, OSError) as exc:
        print(f"panelgls: error: {exc}", file=sys.stderr)
        return 2
    return run_cli(config)


if __name__ == "__main__":
    sys.exit(main())
