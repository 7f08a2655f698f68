"""Command-line front end: benchmarks, evaluations, demos, training runs.

Five subcommands share the same plumbing: settings come from a flat
``key = value`` file (``--config``) with ``--seed`` overriding the config
seed, artifacts land in ``--out``, and every invocation writes a
``summary.json`` carrying the tool version and a SHA-256 hash of the
resolved configuration. ``--format csv`` (the default) additionally writes
the delimited logs plus rendered figures next to them; ``--format
json-summary`` writes the summary alone.

Exit codes: 0 success, 1 numeric or tolerance failure, 2 usage/config
error. Identical command line + config + seed reproduce identical bytes.
"""

import argparse
import csv
import dataclasses
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .config import ConfigError, KeyReader, parse_kv_file, read_train_config
from .diagnostics import (
    emit_csv,
    emit_histogram_csv,
    float_repr,
    stable_rank,
    write_summary,
)
from .linalg import operator_norm, svd
from .matfun import (
    DivergenceError,
    IllConditionedError,
    NumericFailureError,
    SqrtIterConfig,
    newton_schulz_sqrt,
    ns_squared_sqrt,
    sqrt_eig,
    stiefel_project,
    visser_sqrt,
)
from .predictors import (
    RIDGE_ALPHA_GRID,
    PredictorKind,
    PredictorParams,
    compute_predictor,
)
from .report import (
    render_bench_figure,
    render_pca_figure,
    render_predictor_heatmap,
    render_quasi_figure,
    render_ridge_sweep_figure,
    render_train_figures,
)
from .riemann import quasi_orthogonality
from .streampca import PcaState, krasulina_step, matrix_krasulina_step, oja_step
from .trainer import config_as_dict, orthonormal_columns, train_byol

EXIT_OK = 0
EXIT_NUMERIC = 1
EXIT_USAGE = 2

_NUMERIC_ERRORS = (DivergenceError, NumericFailureError, IllConditionedError)


def _fro(m: np.ndarray) -> float:
    return float(np.sqrt(np.sum(m * m)))


def _admissible_visser_eta(op_norm: float) -> float:
    """Largest safe Visser step for a matrix with the given operator norm.

    The scalar recursion converges monotonically from p0 = 1/(2 eta) iff
    eta * sqrt(lambda_max) <= 1/2; staying at 90% of both that bound and
    the eta * lambda_max < 1 stability guard keeps a margin on each.
    """
    return min(0.45 / np.sqrt(op_norm), 0.9 / op_norm)


def _write_rows(path: str, header: tuple[str, ...], rows: list[tuple]) -> str:
    """Write one CSV with %.17g floats; column order fixed by `header`."""
    formatted = [
        [v if isinstance(v, str) else float_repr(v) for v in row] for row in rows
    ]
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(formatted)
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc}") from exc
    return path


def _emit_summary(args, config_echo: dict, metrics: dict, outputs: list[str]) -> str:
    """Write summary.json: version + config hash + metrics + artifact list."""
    canonical = json.dumps(config_echo, sort_keys=True, separators=(",", ":"))
    payload = {
        "command": args.command,
        "version": __version__,
        "config": config_echo,
        "config_sha256": hashlib.sha256(canonical.encode("utf-8")).hexdigest(),
        "metrics": metrics,
        "outputs": sorted(
            [os.path.basename(p) for p in outputs] + ["summary.json"]
        ),
    }
    path = os.path.join(args.out, "summary.json")
    write_summary(path, payload)
    return path


def _bench_matrix(f: int, cond: float, lam_max: float, rng) -> np.ndarray:
    """SPD test matrix: log-spaced spectrum in [lam_max/cond, lam_max]."""
    lam = lam_max * np.logspace(-np.log10(cond), 0.0, f)[::-1] if f > 1 else np.array(
        [lam_max]
    )
    q = orthonormal_columns(rng, f, f)
    m = (q * lam) @ q.T
    return 0.5 * (m + m.T)


def cmd_sqrt_bench(args, reader: KeyReader) -> int:
    """Benchmark the square-root iterations against the sqrt_eig oracle.

    Per matrix and method: a residual-vs-iteration trace and a terminal
    error (relative Frobenius against the oracle; fourth-root law for NS2;
    singular-value spread of the scale-corrected product for Stiefel).
    """
    seed = reader.get("seed", int, 0)
    if args.seed is not None:
        seed = args.seed
    f = reader.get("bench_f", int, 64)
    cond = reader.get("bench_cond", float, 100.0)
    lam_max = reader.get("bench_lam_max", float, 1.0)
    n_matrices = reader.get("bench_matrices", int, 5)
    ns_iters = reader.get("ns_iters", int, 25)
    ns2_iters = reader.get("ns2_iters", int, 25)
    visser_iters = reader.get("visser_iters", int, 500)
    visser_eta = reader.get("visser_eta", float, None)
    stiefel_iters = reader.get("stiefel_iters", int, 25)
    tolerances = {
        "NS": reader.get("tol_ns", float, 1e-6),
        "Visser": reader.get("tol_visser", float, 1e-3),
        "NS2": reader.get("tol_ns2", float, 1e-4),
        "Stiefel": reader.get("tol_stiefel", float, 1e-4),
    }
    reader.finish()
    if f < 1 or cond < 1.0 or lam_max <= 0.0 or n_matrices < 1:
        raise ConfigError(
            f"invalid matrix family: bench_f={f}, bench_cond={cond}, "
            f"bench_lam_max={lam_max}, bench_matrices={n_matrices}"
        )
    for key, val in (
        ("ns_iters", ns_iters),
        ("ns2_iters", ns2_iters),
        ("visser_iters", visser_iters),
        ("stiefel_iters", stiefel_iters),
    ):
        if val < 1:
            raise ConfigError(f"config key '{key}': must be >= 1, got {val}")
    if any(t <= 0 for t in tolerances.values()):
        raise ConfigError("tolerances must be positive")

    residual_rows: list[tuple] = []
    terminal_rows: list[tuple] = []
    errors: dict[str, list[float]] = {m: [] for m in tolerances}
    diverged: list[str] = []
    etas: list[float] = []
    first_curves: dict[str, np.ndarray] = {}

    for i in range(n_matrices):
        rng = np.random.default_rng([seed, i])
        sigma = _bench_matrix(f, cond, lam_max, rng)
        oracle = sqrt_eig(sigma)
        oracle_fro = _fro(oracle)
        op = operator_norm(sigma)
        eta = visser_eta if visser_eta is not None else _admissible_visser_eta(op)
        etas.append(eta)

        traces: dict[str, list] = {m: [] for m in tolerances}
        pair = newton_schulz_sqrt(sigma, ns_iters, residuals=traces["NS"])
        errors["NS"].append(_fro(pair.sqrt - oracle) / oracle_fro)

        cfg = SqrtIterConfig(
            n_iters=visser_iters, visser_eta=eta, residual_track=True
        )
        try:
            p_visser = visser_sqrt(sigma, cfg, residuals=traces["Visser"])
            errors["Visser"].append(_fro(p_visser - oracle) / oracle_fro)
        except DivergenceError:
            diverged.append(f"Visser[{i}]")
            errors["Visser"].append(float("inf"))

        quarter = ns_squared_sqrt(sigma, ns2_iters, residuals=traces["NS2"])
        q2 = quarter @ quarter
        errors["NS2"].append(_fro(q2 @ q2 - sigma) / _fro(sigma))

        result = stiefel_project(sigma, stiefel_iters, residuals=traces["Stiefel"])
        s = svd(result.scale_corrected)[1]
        errors["Stiefel"].append(float((s[0] - s[-1]) / s[0]))

        for method, trace in traces.items():
            if i == 0:
                first_curves[method] = np.array([r for _, r in trace])
            for k, resid in trace:
                residual_rows.append((method, str(i), str(k), resid))

    for method, errs in errors.items():
        for i, err in enumerate(errs):
            ok = np.isfinite(err) and err <= tolerances[method]
            status = "pass" if ok else ("diverged" if not np.isfinite(err) else "fail")
            terminal_rows.append((method, str(i), err, tolerances[method], status))

    outputs = []
    if args.format == "csv":
        outputs.append(
            _write_rows(
                os.path.join(args.out, "sqrt_bench_residuals.csv"),
                ("method", "matrix", "iteration", "residual"),
                residual_rows,
            )
        )
        outputs.append(
            _write_rows(
                os.path.join(args.out, "sqrt_bench_terminal.csv"),
                ("method", "matrix", "error", "tolerance", "status"),
                terminal_rows,
            )
        )
        outputs.append(render_bench_figure(first_curves, args.out))

    worst = {m: max(errs) for m, errs in errors.items()}
    all_pass = not diverged and all(
        np.isfinite(worst[m]) and worst[m] <= tolerances[m] for m in tolerances
    )
    config_echo = {
        "seed": seed,
        "bench_f": f,
        "bench_cond": cond,
        "bench_lam_max": lam_max,
        "bench_matrices": n_matrices,
        "ns_iters": ns_iters,
        "ns2_iters": ns2_iters,
        "visser_iters": visser_iters,
        "visser_eta": visser_eta if visser_eta is not None else "auto",
        "stiefel_iters": stiefel_iters,
        **{f"tol_{m.lower()}": t for m, t in tolerances.items()},
    }
    metrics = {
        "worst_error": {
            m: (e if np.isfinite(e) else "diverged") for m, e in worst.items()
        },
        "diverged": diverged,
        "visser_eta_used": etas,
        "all_pass": all_pass,
    }
    _emit_summary(args, config_echo, metrics, outputs)
    return EXIT_OK if all_pass else EXIT_NUMERIC


def _train_outputs(args, log, suffix: str = "") -> list[str]:
    """Write the log/histogram CSVs (and figures for a plain run)."""
    outputs = []
    log_path = os.path.join(args.out, f"train_log{suffix}.csv")
    emit_csv(log, log_path)
    outputs.append(log_path)
    hist_path = os.path.join(args.out, f"train_hist{suffix}.csv")
    emit_histogram_csv(log, hist_path)
    outputs.append(hist_path)
    return outputs


def cmd_train(args, reader: KeyReader) -> int:
    """Run the two-branch training loop and export its diagnostics.

    With ``ridge_sweep = true`` the run is repeated for every alpha on the
    ridge grid, writing one log per alpha plus a sweep figure.
    """
    config = read_train_config(reader, seed_override=args.seed)
    ridge_sweep = reader.get("ridge_sweep", bool, False)
    reader.finish()

    config_echo = config_as_dict(config)
    config_echo["ridge_sweep"] = ridge_sweep
    outputs: list[str] = []

    if not ridge_sweep:
        log = train_byol(config)
        if args.format == "csv":
            outputs.extend(_train_outputs(args, log))
            outputs.extend(render_train_figures(log, args.out))
        last = log.records[-1] if log.records else None
        metrics = {
            "steps_run": config.steps if log.aborted_at is None else log.aborted_at,
            "aborted_at": log.aborted_at,
            "final_loss": None if last is None else last.loss,
            "final_pred_srank": None if last is None else last.pred.srank,
            "final_latent_srank": None if last is None else last.latent_srank,
            "final_balancing_res": None if last is None else last.balancing_res,
        }
        _emit_summary(args, config_echo, metrics, outputs)
        return EXIT_OK if log.aborted_at is None else EXIT_NUMERIC

    base = config.resolved_params()
    sweep: dict[str, dict] = {}
    pred_sranks, latent_sranks = [], []
    any_aborted = False
    for alpha in RIDGE_ALPHA_GRID:
        run_cfg = dataclasses.replace(
            config,
            predictor_params=dataclasses.replace(base, ridge_alpha=alpha),
        )
        log = train_byol(run_cfg)
        any_aborted = any_aborted or log.aborted_at is not None
        if args.format == "csv":
            outputs.extend(_train_outputs(args, log, suffix=f"_alpha{alpha:.2f}"))
        last = log.records[-1] if log.records else None
        pred_sranks.append(None if last is None else last.pred.srank)
        latent_sranks.append(None if last is None else last.latent_srank)
        sweep[f"{alpha:.2f}"] = {
            "aborted_at": log.aborted_at,
            "final_loss": None if last is None else last.loss,
            "final_pred_srank": pred_sranks[-1],
            "final_latent_srank": latent_sranks[-1],
        }
    if args.format == "csv" and all(s is not None for s in pred_sranks):
        outputs.append(
            render_ridge_sweep_figure(
                list(RIDGE_ALPHA_GRID), pred_sranks, latent_sranks, args.out
            )
        )
    metrics = {"ridge_sweep": sweep, "alphas": list(RIDGE_ALPHA_GRID)}
    _emit_summary(args, config_echo, metrics, outputs)
    return EXIT_NUMERIC if any_aborted else EXIT_OK


def cmd_pca_demo(args, reader: KeyReader) -> int:
    """Streaming PCA demo: alignment/principal-angle curve on a gap stream.

    The data stream has covariance Q diag(lam) Q^T with a random rotation Q
    and a leading eigengap; the demo tracks how fast the chosen update
    aligns with the top eigenspace from sym_eig.
    """
    seed = reader.get("seed", int, 0)
    if args.seed is not None:
        seed = args.seed
    f = reader.get("pca_f", int, 8)
    k = reader.get("pca_k", int, 1)
    alg = reader.get("pca_alg", str, "oja")
    lead = reader.get("pca_lead", float, 4.0)
    steps = reader.get("pca_steps", int, 20000)
    eta = reader.get("pca_eta", float, 0.01)
    batch = reader.get("pca_batch", int, 8)
    log_interval = reader.get("pca_log_interval", int, 100)
    target = reader.get("pca_target", float, 0.99)
    reader.finish()
    if alg not in ("oja", "krasulina", "matrix"):
        raise ConfigError(
            f"config key 'pca_alg': must be one of oja, krasulina, matrix, got {alg!r}"
        )
    if not 1 <= k <= f:
        raise ConfigError(f"config key 'pca_k': need 1 <= k <= pca_f, got {k}")
    if alg != "matrix" and k != 1:
        raise ConfigError(f"config key 'pca_k': {alg} update tracks one direction")
    if steps < 1 or batch < 1 or log_interval < 1:
        raise ConfigError("pca_steps, pca_batch and pca_log_interval must be >= 1")
    lam = np.ones(f)
    lam[:k] = lead * 0.5 ** np.arange(k)
    if k < f and lam[k - 1] <= lam[k]:
        raise ConfigError(
            f"config key 'pca_lead': no eigengap, lambda_k = {lam[k - 1]:g} "
            f"does not exceed the tail value 1"
        )

    q = orthonormal_columns(np.random.default_rng([seed, 0]), f, f)
    cov = (q * lam) @ q.T
    cov = 0.5 * (cov + cov.T)
    top = q[:, :k]
    sqrt_lam = np.sqrt(lam)

    init_rng = np.random.default_rng([seed, 1])
    stream_rng = np.random.default_rng([seed, 2])

    if alg == "matrix":
        state = PcaState(p=orthonormal_columns(init_rng, f, k), eta=eta, step=0)
    else:
        state = PcaState(p=init_rng.standard_normal(f), eta=eta, step=0)

    def snapshot(step: int) -> tuple:
        if alg == "matrix":
            frame = state.p
        else:
            frame = (state.p / np.sqrt(np.sum(state.p**2)))[:, None]
        align = float(np.abs(top[:, 0] @ frame @ frame.T @ top[:, 0]) ** 0.5)
        s = svd(top.T @ frame)[1]
        angle = float(np.arccos(np.clip(s[-1], -1.0, 1.0)))
        objective = float(np.trace(frame.T @ cov @ frame))
        return (str(step), align, angle, objective)

    rows = [snapshot(0)]
    for t in range(1, steps + 1):
        g = stream_rng.standard_normal((batch, f))
        x = (g * sqrt_lam) @ q.T
        if batch > 1:
            # Rows scaled so X^T X estimates the covariance itself and eta
            # keeps its per-sample meaning at any batch size.
            x = x / np.sqrt(batch)
        if alg == "matrix":
            state = matrix_krasulina_step(state, x, eta)
        elif alg == "oja":
            state = oja_step(state, x, eta)
        else:
            state = krasulina_step(state, x, eta)
        if t % log_interval == 0 or t == steps:
            rows.append(snapshot(t))

    # "Reaches the target" is a statement about the logged curve, not just
    # the last point: constant-step updates keep a noise floor they can
    # bounce on after first crossing it.
    best = max(min(r[1], float(np.cos(r[2]))) for r in rows)
    reached = best >= target
    outputs = []
    if args.format == "csv":
        outputs.append(
            _write_rows(
                os.path.join(args.out, "pca_demo.csv"),
                ("step", "alignment_top1", "principal_angle_topk", "objective"),
                rows,
            )
        )
        steps_col = np.array([int(r[0]) for r in rows])
        outputs.append(
            render_pca_figure(
                steps_col,
                np.array([r[1] for r in rows]),
                np.array([r[2] for r in rows]),
                args.out,
            )
        )
    config_echo = {
        "seed": seed,
        "pca_f": f,
        "pca_k": k,
        "pca_alg": alg,
        "pca_lead": lead,
        "pca_steps": steps,
        "pca_eta": eta,
        "pca_batch": batch,
        "pca_log_interval": log_interval,
        "pca_target": target,
    }
    metrics = {
        "final_alignment_top1": rows[-1][1],
        "final_principal_angle_topk": rows[-1][2],
        "final_objective": rows[-1][3],
        "best_alignment": best,
        "target": target,
        "reached_target": bool(reached),
    }
    _emit_summary(args, config_echo, metrics, outputs)
    return EXIT_OK if reached else EXIT_NUMERIC


def cmd_predictor_eval(args, reader: KeyReader) -> int:
    """Evaluate the whole predictor catalog on one synthetic batch pair.

    Reports each kind's distance to identity, spectrum statistics and
    quasi-orthogonality, plus the pairwise Frobenius distances between
    kinds. With identical views and a full-rank batch the LRP output must
    sit on the identity.
    """
    seed = reader.get("seed", int, 0)
    if args.seed is not None:
        seed = args.seed
    b = reader.get("eval_b", int, 64)
    f = reader.get("eval_f", int, 16)
    identical = reader.get("eval_identical", bool, True)
    view_noise = reader.get("eval_view_noise", float, 0.05)
    visser_iters = reader.get("visser_iters", int, 400)
    scale_direct = reader.get("eval_scale_direct", bool, True)
    tol_identity = reader.get("tol_lrp_identity", float, 1e-8)
    reader.finish()
    if b < f or f < 1:
        raise ConfigError(f"need eval_b >= eval_f >= 1, got b={b}, f={f}")
    if view_noise < 0:
        raise ConfigError("config key 'eval_view_noise': must be >= 0")

    rng = np.random.default_rng([seed, 0])
    z_on = rng.standard_normal((b, f))
    z_tg = z_on.copy() if identical else z_on + view_noise * rng.standard_normal((b, f))

    eta = _admissible_visser_eta(operator_norm(z_on.T @ z_on / b))
    kinds = list(PredictorKind)
    preds: dict[PredictorKind, np.ndarray] = {}
    eye = np.eye(f)
    eval_rows = []
    for kind in kinds:
        overrides: dict = {"scale_direct_cov": scale_direct}
        if kind == PredictorKind.VISSER:
            overrides["sqrt_cfg"] = SqrtIterConfig(
                n_iters=visser_iters, visser_eta=eta
            )
        params = PredictorParams.for_kind(kind, **overrides)
        p = compute_predictor(kind, z_on, z_tg, params=params)
        preds[kind] = p
        quasi = quasi_orthogonality(p)
        eval_rows.append(
            (
                kind.value,
                _fro(p - eye),
                quasi.op_norm,
                stable_rank(p),
                float(np.trace(p)),
                quasi.eps_proj,
                quasi.eps_sym,
                quasi.eps_orth,
            )
        )

    n = len(kinds)
    distances = np.zeros((n, n))
    pairwise_rows = []
    for i in range(n):
        for j in range(i + 1, n):
            d = _fro(preds[kinds[i]] - preds[kinds[j]])
            distances[i, j] = distances[j, i] = d
            pairwise_rows.append((kinds[i].value, kinds[j].value, d))

    outputs = []
    if args.format == "csv":
        outputs.append(
            _write_rows(
                os.path.join(args.out, "predictor_eval.csv"),
                (
                    "kind",
                    "dist_to_identity",
                    "op_norm",
                    "srank",
                    "trace",
                    "eps_proj",
                    "eps_sym",
                    "eps_orth",
                ),
                eval_rows,
            )
        )
        outputs.append(
            _write_rows(
                os.path.join(args.out, "predictor_pairwise.csv"),
                ("kind_a", "kind_b", "frobenius_distance"),
                pairwise_rows,
            )
        )
        outputs.append(
            render_predictor_heatmap([k.value for k in kinds], distances, args.out)
        )

    lrp_dist = eval_rows[kinds.index(PredictorKind.LRP)][1]
    ok = (not identical) or lrp_dist <= tol_identity
    config_echo = {
        "seed": seed,
        "eval_b": b,
        "eval_f": f,
        "eval_identical": identical,
        "eval_view_noise": view_noise,
        "visser_iters": visser_iters,
        "eval_scale_direct": scale_direct,
        "tol_lrp_identity": tol_identity,
    }
    metrics = {
        "lrp_dist_to_identity": lrp_dist,
        "max_pairwise_distance": float(distances.max()),
        "visser_eta_used": eta,
        "dist_to_identity": {row[0]: row[1] for row in eval_rows},
    }
    _emit_summary(args, config_echo, metrics, outputs)
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_quasi_ortho(args, reader: KeyReader) -> int:
    """Sweep perturbed projections and verify the epsilon-orthogonality bound.

    Starts from an exact rank-k projection (all epsilons ~0), then adds
    dense noise at increasing scales and checks
    eps_orth <= eps_proj + |||P||| eps_sym + 1e-10 on every trial.
    """
    seed = reader.get("seed", int, 0)
    if args.seed is not None:
        seed = args.seed
    f = reader.get("qo_f", int, 16)
    k = reader.get("qo_k", int, 8)
    delta_min = reader.get("qo_delta_min", float, 1e-8)
    delta_max = reader.get("qo_delta_max", float, 1e-1)
    n_points = reader.get("qo_points", int, 15)
    trials = reader.get("qo_trials", int, 20)
    reader.finish()
    if not 1 <= k <= f:
        raise ConfigError(f"config key 'qo_k': need 1 <= k <= qo_f, got {k}")
    if not 0 < delta_min <= delta_max:
        raise ConfigError("need 0 < qo_delta_min <= qo_delta_max")
    if n_points < 1 or trials < 1:
        raise ConfigError("qo_points and qo_trials must be >= 1")

    rng = np.random.default_rng([seed, 0])
    deltas = np.concatenate(
        ([0.0], np.logspace(np.log10(delta_min), np.log10(delta_max), n_points))
    )
    rows = []
    figure_reports = []
    max_violation = -np.inf
    exact_eps_max = 0.0
    for delta in deltas:
        for trial in range(trials):
            u = orthonormal_columns(rng, f, k)
            p = u @ u.T
            if delta > 0:
                p = p + delta * rng.standard_normal((f, f))
            report = quasi_orthogonality(p)
            if trial == 0 and delta > 0:
                figure_reports.append(report)
            bound = report.eps_proj + report.op_norm * report.eps_sym + 1e-10
            max_violation = max(max_violation, report.eps_orth - bound)
            if delta == 0.0:
                exact_eps_max = max(
                    exact_eps_max, report.eps_proj, report.eps_sym, report.eps_orth
                )
            rows.append(
                (
                    delta,
                    str(trial),
                    report.eps_proj,
                    report.eps_sym,
                    report.eps_orth,
                    report.op_norm,
                    bound - report.eps_orth,
                )
            )

    outputs = []
    if args.format == "csv":
        outputs.append(
            _write_rows(
                os.path.join(args.out, "quasi_ortho.csv"),
                (
                    "delta",
                    "trial",
                    "eps_proj",
                    "eps_sym",
                    "eps_orth",
                    "op_norm",
                    "bound_slack",
                ),
                rows,
            )
        )
        outputs.append(render_quasi_figure(deltas[1:], figure_reports, args.out))

    config_echo = {
        "seed": seed,
        "qo_f": f,
        "qo_k": k,
        "qo_delta_min": delta_min,
        "qo_delta_max": delta_max,
        "qo_points": n_points,
        "qo_trials": trials,
    }
    metrics = {
        "max_bound_violation": float(max_violation),
        "exact_eps_max": float(exact_eps_max),
        "bound_holds": bool(max_violation <= 0.0),
    }
    _emit_summary(args, config_echo, metrics, outputs)
    return EXIT_OK if max_violation <= 0.0 else EXIT_NUMERIC


_COMMANDS = (
    ("sqrt-bench", cmd_sqrt_bench, "benchmark square-root iterations vs sqrt_eig"),
    ("predictor-eval", cmd_predictor_eval, "compare all predictor kinds on one batch"),
    ("pca-demo", cmd_pca_demo, "streaming PCA alignment demo"),
    ("train", cmd_train, "run the two-branch training loop"),
    ("quasi-ortho", cmd_quasi_ortho, "perturbed-projection epsilon sweep"),
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="selfpred",
        description="closed-form predictor experiments and numeric benchmarks",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, func, help_text in _COMMANDS:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="flat key = value settings file")
        p.add_argument(
            "--seed", type=int, default=None, help="override the config seed"
        )
        p.add_argument(
            "--out", default="out", help="output directory (created if missing)"
        )
        p.add_argument(
            "--format",
            choices=("csv", "json-summary"),
            default="csv",
            help="csv: delimited logs + figures + summary; json-summary: summary only",
        )
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        kv = parse_kv_file(args.config) if args.config is not None else {}
        reader = KeyReader(kv, source=args.config or "builtin defaults")
        os.makedirs(args.out, exist_ok=True)
        return args.func(args, reader)
    except ConfigError as exc:
        print(f"selfpred {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _NUMERIC_ERRORS as exc:
        print(f"selfpred {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
