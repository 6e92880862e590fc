"""NMSE and sum-rate sweeps driven by an :class:`ExperimentConfig`.

Trials are processed in fixed blocks of ``BLOCK`` consecutive indices.  Every
random draw comes from a stream keyed by the trial index, and block boundaries
do not depend on the worker count, so tables are bit-identical for any
``threads`` value.
"""

from __future__ import annotations

import numpy as np

from .. import __version__
from ..channel import ChannelProfile, sample_taps
from ..estimators import FullPilotReceiver, fullpilot_plan, gls_solver, ls_estimate
from ..fbmc import FbmcConfig
from ..link import PreambleLink
from ..mimo import ScenarioConfig, run_cell_scenario
from ..parallel import run_trials
from ..pilots import design_plan
from ..streams import complex_normal, stream
from ..system import build_single_user_A, system_for
from .config import ConfigError, ExperimentConfig
from .results import ResultTable

BLOCK = 50


def _blocks(trials: int) -> list[tuple[int, int]]:
    return [(a, min(a + BLOCK, trials)) for a in range(0, trials, BLOCK)]


def _run_blocks(fn, trials: int, threads: int) -> dict[str, np.ndarray]:
    """Apply ``fn(a, b)`` to every block and join the per-trial arrays on the last axis."""
    blocks = _blocks(trials)
    parts = run_trials(lambda i: fn(*blocks[i]), len(blocks), threads)
    return {k: np.concatenate([p[k] for p in parts], axis=-1) for k in parts[0]}


def _metadata(cfg: ExperimentConfig, **extra) -> dict[str, str]:
    meta = {
        "kind": cfg.kind,
        "config_hash": cfg.config_hash(),
        "seed": str(cfg.seed),
        "trials": str(cfg.trials),
        "version": __version__,
    }
    meta.update({k: str(v) for k, v in extra.items()})
    return meta


def _user_taps(cfg: ExperimentConfig, t: int) -> list[np.ndarray]:
    betas = [cfg.beta_interest]
    if cfg.users > 1:
        betas += list(stream(cfg.seed, "beta", t).uniform(*cfg.beta_others, size=cfg.users - 1))
    rng = stream(cfg.seed, "channel", t)
    return [sample_taps(ChannelProfile(L, b), rng) for L, b in zip(cfg.lengths, betas)]


def _powers(cfg: ExperimentConfig) -> list[float]:
    return [float(L) if cfg.power is None else cfg.power for L in cfg.lengths]


def _fill(table: ResultTable, cfg: ExperimentConfig, data: dict[str, np.ndarray]) -> None:
    for metric, values in data.items():
        for i, snr in enumerate(cfg.snr_db):
            table.add(snr, metric, values[i])


def run_nmse_sweep(cfg: ExperimentConfig, threads: int = 1) -> ResultTable:
    """Empirical NMSE with its analytic MSE and CRLB companions over the SNR grid.

    ``nmse_*`` metrics are per-trial ratios to ``||h||^2`` averaged over
    trials; ``mse_*`` metrics are unnormalised squared errors.
    """
    if cfg.kind == "nmse_single":
        return _nmse_single(cfg, threads)
    if cfg.kind == "nmse_multi":
        return _nmse_multi(cfg, threads)
    raise ConfigError("experiment.kind", f"{cfg.kind!r} is not an NMSE experiment")


def _nmse_single(cfg: ExperimentConfig, threads: int) -> ResultTable:
    fbmc = FbmcConfig.phydyas(cfg.M, cfg.kappa)
    L = cfg.lengths[0]
    P = _powers(cfg)[0]
    sigma2 = np.array([cfg.noise_variance(s) for s in cfg.snr_db])
    variants = []
    for count in cfg.pilot_counts or (L,):
        plan = design_plan(cfg.M, [L], P, pilot_counts=[count], seed=cfg.seed)
        S = system_for(fbmc, plan)
        solver = gls_solver(S)
        variants.append((count, PreambleLink(fbmc, plan), solver, build_single_user_A(fbmc, plan)))
    window = max(v[1].window for v in variants)

    def block(a: int, b: int) -> dict[str, np.ndarray]:
        taps = np.stack([_user_taps(cfg, t)[0] for t in range(a, b)])
        noise = np.stack([complex_normal(stream(cfg.seed, "noise", t), window) for t in range(a, b)])
        energy = np.sum(np.abs(taps) ** 2, axis=-1)
        out = {}
        closed = sigma2[:, None] * L / P
        for count, link, solver, A in variants:
            clean = link.observe([taps])
            nz = link.demodulate(noise[:, : link.window])
            e_gls = np.empty((sigma2.size, b - a))
            e_ls = np.empty_like(e_gls)
            for i, s2 in enumerate(sigma2):
                z = clean + np.sqrt(s2) * nz
                e_gls[i] = np.sum(np.abs(solver.estimate(z) - taps) ** 2, axis=-1)
                e_ls[i] = np.sum(np.abs(ls_estimate(z, A) - taps) ** 2, axis=-1)
            analytic = sigma2[:, None] * solver.error_covariance_trace() * np.ones(b - a)
            bound = sigma2[:, None] * solver.fisher_inverse_trace() * np.ones(b - a)
            tag = f"_np{count}"
            out["nmse" + tag] = e_gls / energy
            out["nmse_ls" + tag] = e_ls / energy
            out["nmse_analytic" + tag] = analytic / energy
            out["nmse_crlb" + tag] = bound / energy
            out["mse" + tag] = e_gls
            out["mse_ls" + tag] = e_ls
            out["mse_analytic" + tag] = analytic
            out["mse_crlb" + tag] = bound
        out["nmse_closed_form"] = closed / energy
        out["mse_closed_form"] = closed * np.ones(b - a)
        return out

    table = ResultTable(metadata=_metadata(cfg))
    _fill(table, cfg, _run_blocks(block, cfg.trials, threads))
    return table


def _nmse_multi(cfg: ExperimentConfig, threads: int) -> ResultTable:
    fbmc = FbmcConfig.phydyas(cfg.M, cfg.kappa)
    powers = _powers(cfg)
    sigma2 = np.array([cfg.noise_variance(s) for s in cfg.snr_db])
    plan = design_plan(cfg.M, list(cfg.lengths), powers, seed=cfg.seed)
    link = PreambleLink(fbmc, plan)
    solver = gls_solver(system_for(fbmc, plan))
    if cfg.baseline:
        base_plan = fullpilot_plan(fbmc, list(cfg.lengths), powers, seed=cfg.seed)
        base_link = PreambleLink(fbmc, base_plan)
        base_rx = FullPilotReceiver(fbmc, base_plan)
    preamble = plan.n_slots + cfg.kappa - 1

    def errors(h_hat: list[np.ndarray], taps: list[np.ndarray]) -> np.ndarray:
        return sum(np.sum(np.abs(e - h) ** 2, axis=-1) for e, h in zip(h_hat, taps))

    def block(a: int, b: int) -> dict[str, np.ndarray]:
        draws = [_user_taps(cfg, t) for t in range(a, b)]
        taps = [np.stack([d[u] for d in draws]) for u in range(cfg.users)]
        energy = sum(np.sum(np.abs(h) ** 2, axis=-1) for h in taps)
        n = b - a
        clean = link.observe(taps)
        nz = link.demodulate(
            np.stack([complex_normal(stream(cfg.seed, "noise", t, 0), link.window) for t in range(a, b)])
        )
        err = np.empty((sigma2.size, n))
        err_u = np.empty((cfg.users, sigma2.size, n))
        for i, s2 in enumerate(sigma2):
            h_hat = solver.estimate_users(clean + np.sqrt(s2) * nz)
            for u in range(cfg.users):
                err_u[u, i] = np.sum(np.abs(h_hat[u] - taps[u]) ** 2, axis=-1)
            err[i] = err_u[:, i].sum(axis=0)
        analytic = sigma2[:, None] * solver.error_covariance_trace() * np.ones(n)
        bound = sigma2[:, None] * solver.fisher_inverse_trace() * np.ones(n)
        out = {
            "nmse": err / energy,
            "nmse_analytic": analytic / energy,
            "nmse_crlb": bound / energy,
            "mse": err,
            "mse_analytic": analytic,
            "mse_crlb": bound,
        }
        for u in range(cfg.users):
            out[f"nmse_user{u}"] = err_u[u] / np.sum(np.abs(taps[u]) ** 2, axis=-1)
        if cfg.baseline:
            b_clean = base_link.observe(taps)
            b_nz = base_link.demodulate(
                np.stack(
                    [complex_normal(stream(cfg.seed, "noise", t, 1), base_link.window) for t in range(a, b)]
                )
            )
            b_err = np.empty((sigma2.size, n))
            for i, s2 in enumerate(sigma2):
                b_err[i] = errors(base_rx.estimate_users(b_clean + np.sqrt(s2) * b_nz), taps)
            b_analytic = np.array([base_rx.analytic_mse(s2) for s2 in sigma2])[:, None] * np.ones(n)
            out["nmse_baseline"] = b_err / energy
            out["mse_baseline"] = b_err
            out["mse_analytic_baseline"] = b_analytic
        return out

    extra = {"preamble_slots": preamble}
    if cfg.baseline:
        extra["baseline_preamble_slots"] = base_rx.preamble_slots
    table = ResultTable(metadata=_metadata(cfg, **extra))
    _fill(table, cfg, _run_blocks(block, cfg.trials, threads))
    return table


def scenario_from(cfg: ExperimentConfig) -> ScenarioConfig:
    return ScenarioConfig(
        R=cfg.antennas,
        U=cfg.users,
        cells=cfg.cells,
        M=cfg.M,
        kappa=cfg.kappa,
        L=cfg.lengths[0],
        coherence_slots=cfg.coherence_slots,
        snr_db=tuple(cfg.snr_db),
        trials=cfg.trials,
        pilot_power=cfg.power,
        beta_interest=cfg.beta_interest,
        beta_range=tuple(cfg.beta_others),
        cross_gain=cfg.cross_gain,
        disjoint_cells=cfg.disjoint_cells,
        seed=cfg.seed,
    )


def run_sumrate_sweep(cfg: ExperimentConfig, threads: int = 1) -> ResultTable:
    """Per-cell sum-rate of the proposed and baseline methods over the SNR grid."""
    if cfg.kind != "sumrate_cell":
        raise ConfigError("experiment.kind", f"{cfg.kind!r} is not a sum-rate experiment")
    scenario = scenario_from(cfg)
    results = {m: run_cell_scenario(scenario, m, threads=threads) for m in ("proposed", "baseline")}
    table = ResultTable(
        metadata=_metadata(
            cfg,
            gamma_proposed=repr(results["proposed"].gamma),
            gamma_baseline=repr(results["baseline"].gamma),
        )
    )
    data = {}
    for method, res in results.items():
        data[f"sum_rate_{method}"] = res.sum_rate.T
    for method, res in results.items():
        data[f"sinr_{method}"] = res.sinr.mean(axis=-1).T
    _fill(table, cfg, data)
    return table


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> ResultTable:
    if cfg.kind == "sumrate_cell":
        return run_sumrate_sweep(cfg, threads)
    return run_nmse_sweep(cfg, threads)
