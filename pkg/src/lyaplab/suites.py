"""Property-check suites behind ``lyaplab check``.

Each suite runs a batch of randomized or statistical checks at a fixed seed
and returns SuiteResult rows (pass / fail / inconclusive plus the measured
numbers).  The acceptance tests call these functions directly; the CLI
prints them as a table.  All randomness is derived from the given seed, so
repeated runs produce byte-identical reports.
"""

from __future__ import annotations

import math

import numpy as np

from . import scenarios
from .engine import (EstimatorConfig, combined_stderr, estimate_block_svd,
                     estimate_iwasawa_formula, estimate_kingman_qr,
                     kesten_drift_check, simplicity_report)
from .errors import InvalidArgument
from .liealg import (CartanVector, Flag, GroupKind, GroupModel, RootSystemInfo,
                     canonicalize_frame, cartan_projection, dominance_leq,
                     exterior_power, iwasawa_cocycle, kostant_hull_check, length,
                     random_element, wedge_log_norm)
from .report import SuiteResult
from .transforms import (SuspensionGreg, conjugate, cross_section_greg,
                         discretize_flow, induce, roof_integral)

SUITE_NAMES = ("liealg-identities", "estimator-agreement", "transform-laws", "drift")


def _result(name: str, ok: bool, measured: dict, inconclusive: bool = False) -> SuiteResult:
    outcome = "pass" if ok else ("inconclusive" if inconclusive else "fail")
    return SuiteResult(name=name, outcome=outcome, measured=measured)


def _random_sl_batch(rng: np.random.Generator, d: int, n: int,
                     spread: float = 0.7) -> np.ndarray:
    """n random special-linear matrices, entrywise Gaussian renormalized."""
    out = np.empty((n, d, d))
    need = np.arange(n)
    while need.size:
        raw = rng.normal(scale=spread, size=(need.size, d, d))
        det = np.linalg.det(raw)
        ok = np.abs(det) > 1e-6
        fixed = raw[ok] * np.sign(det[ok])[:, None, None]
        fixed /= np.abs(det[ok])[:, None, None] ** (1.0 / d)
        # odd d: sign absorbed by the root; even d: flip a row to fix det
        if d % 2 == 0:
            neg = np.linalg.det(fixed) < 0
            fixed[neg, 0, :] *= -1.0
            fixed[neg] /= np.abs(np.linalg.det(fixed[neg]))[:, None, None] ** (1.0 / d)
        out[need[ok]] = fixed
        need = need[~ok]
    return out


def _random_flags(rng: np.random.Generator, d: int, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(n, d, d)))
    s = np.sign(np.einsum("bii->bi", r))
    s[s == 0] = 1.0
    return q * s[:, None, :]


def suite_liealg_identities(seed: int = 0, samples_per_dim: int = 3400) -> list:
    """Exact algebraic identities of the matrix-group kernels, fuzzed."""
    rng = np.random.default_rng(seed)
    results = []
    worst = {"cocycle": 0.0, "sigmabound": 0.0, "subadd": 0.0, "wedge": 0.0,
             "kappa_inv": 0.0, "kostant_fail": 0.0}
    subadd_ok = True
    kostant_ok = True
    lp_checked = 0

    for d in (2, 3, 4):
        model = GroupModel(GroupKind.SPECIAL_LINEAR, d)
        n = samples_per_dim
        gs = _random_sl_batch(rng, d, n)
        hs = _random_sl_batch(rng, d, n)
        flags = _random_flags(rng, d, n)

        # Iwasawa cocycle identity sigma(gh, xi) = sigma(g, h.xi) + sigma(h, xi)
        for i in range(n):
            g, h, xi = gs[i], hs[i], Flag(flags[i])
            s_h, xi_h = iwasawa_cocycle(h, xi)
            s_g, _ = iwasawa_cocycle(g, xi_h)
            s_gh, _ = iwasawa_cocycle(g @ h, xi)
            gap = float(np.max(np.abs(s_gh.coords - s_g.coords - s_h.coords)))
            tol = 1e-8 * (1.0 + length(g) + length(h))
            worst["cocycle"] = max(worst["cocycle"], gap / tol)

        # Iwasawa projections stay inside the Weyl-orbit hull of kappa
        m = 30
        flag_batch = _random_flags(rng, d, 1000)
        for g in gs[:m]:
            kap = cartan_projection(g).coords
            prod = g[None] @ flag_batch
            q, r = np.linalg.qr(prod)
            diag = np.abs(np.einsum("bii->bi", r))
            sig = np.log(diag)
            pref_sig = np.cumsum(sig, axis=1)
            pref_kap = np.cumsum(kap)
            viol = float(np.max(pref_sig - pref_kap[None, :]))
            worst["sigmabound"] = max(worst["sigmabound"], viol)
            norm_gap = float(np.max(np.linalg.norm(sig, axis=1)) - np.linalg.norm(kap))
            worst["sigmabound"] = max(worst["sigmabound"], norm_gap)

        # Cartan subadditivity in the dominance order
        kap_g = np.log(np.linalg.svd(gs, compute_uv=False))
        kap_h = np.log(np.linalg.svd(hs, compute_uv=False))
        kap_gh = np.log(np.linalg.svd(gs @ hs, compute_uv=False))
        for i in range(n):
            if not dominance_leq(CartanVector(kap_gh[i]),
                                 CartanVector(kap_g[i] + kap_h[i])):
                subadd_ok = False
                worst["subadd"] += 1.0

        # wedge norms against dense exterior powers
        n_wedge = min(n, 1500)
        for i in range(n_wedge):
            g = gs[i]
            for k in range(1, d + 1):
                direct = wedge_log_norm(g, k)
                dense = float(np.log(np.linalg.svd(exterior_power(g, k),
                                                   compute_uv=False)[0]))
                worst["wedge"] = max(worst["wedge"], abs(direct - dense))

        # kappa of the inverse is the negated reversal
        kap_inv = np.log(np.linalg.svd(np.linalg.inv(gs), compute_uv=False))
        gap = float(np.max(np.abs(kap_inv - (-kap_g[:, ::-1]))))
        worst["kappa_inv"] = max(worst["kappa_inv"], gap)

        # Kostant convexity: iota(exp(v) k) inside conv(W v)
        for i in range(n):
            v = rng.normal(size=d)
            v -= v.mean()
            n_weyl = 30 if lp_checked < 50 else 0
            lp_checked += 1 if n_weyl else 0
            if not kostant_hull_check(CartanVector(v), Flag(flags[i]),
                                      n_weyl_samples=n_weyl, model=model):
                kostant_ok = False
                worst["kostant_fail"] += 1.0

    # symplectic spot checks: kappa antisymmetry and dominance
    sp = GroupModel(GroupKind.SYMPLECTIC, 4)
    sym_gap = 0.0
    for _ in range(500):
        g = random_element(sp, rng, spread=0.5)
        kap = cartan_projection(g).coords
        sym_gap = max(sym_gap, float(np.max(np.abs(kap + kap[::-1]))))

    results.append(_result("iwasawa-cocycle-identity", worst["cocycle"] <= 1.0,
                           {"worst_rel_violation": worst["cocycle"], "tolerance": 1.0}))
    results.append(_result("iwasawa-kostant-bound", worst["sigmabound"] <= 1e-9,
                           {"worst_violation": worst["sigmabound"], "tolerance": 1e-9}))
    results.append(_result("cartan-subadditivity", subadd_ok,
                           {"failures": worst["subadd"], "tolerance": 0.0}))
    results.append(_result("wedge-consistency", worst["wedge"] <= 1e-8,
                           {"worst_violation": worst["wedge"], "tolerance": 1e-8}))
    results.append(_result("kappa-inverse-symmetry", worst["kappa_inv"] <= 1e-8,
                           {"worst_violation": worst["kappa_inv"], "tolerance": 1e-8}))
    results.append(_result("kostant-hull-membership", kostant_ok,
                           {"failures": worst["kostant_fail"],
                            "lp_cross_checked": float(lp_checked)}))
    results.append(_result("symplectic-kappa-pairing", sym_gap <= 1e-9,
                           {"worst_violation": sym_gap, "tolerance": 1e-9}))
    return results


def _agreement_row(name: str, a, b, scale_b: float = 1.0,
                   extra: dict | None = None) -> SuiteResult:
    """Coordinatewise agreement of two estimates within 3 combined stderr."""
    diff = np.abs(a.coords - scale_b * b.coords)
    se = np.sqrt(a.stderr ** 2 + (scale_b * b.stderr) ** 2)
    margin = float(np.max(diff - 3 * se))
    measured = {"max_coord_diff": float(diff.max()),
                "max_allowed_3sigma": float((3 * se).max()),
                "margin": margin}
    if extra:
        measured.update(extra)
    return _result(name, margin <= 0.0, measured)


def suite_estimator_agreement(seed: int = 0, n_steps: int = 100_000,
                              n_trajectories: int = 64, threads: int = 1) -> list:
    results = []
    cfg = EstimatorConfig(n_steps=n_steps, n_trajectories=n_trajectories,
                          burn_in=1000, seed=seed)

    # exact diagonal case: both estimators against the closed form
    drv = scenarios.diag_iid_driver(seed)
    exact = np.array([scenarios.DIAG_IID_TOP_EXPONENT,
                      -scenarios.DIAG_IID_TOP_EXPONENT])
    king = estimate_kingman_qr(drv, cfg=cfg, threads=threads)
    iwa = estimate_iwasawa_formula(drv, cfg=cfg, threads=threads)
    for est, tag in ((king, "kingman"), (iwa, "iwasawa")):
        gap = np.abs(est.coords - exact)
        margin = float(np.max(gap - 3 * est.stderr))
        results.append(_result(f"diag-exactness-{tag}", margin <= 0.0,
                               {"max_coord_error": float(gap.max()),
                                "max_allowed_3sigma": float((3 * est.stderr).max()),
                                "lambda_top": float(est.coords[0]),
                                "exact_top": float(exact[0])}))

    # block-SVD cross-check on identical streams, same step window
    cfg_same = EstimatorConfig(n_steps=10_000, n_trajectories=16, burn_in=0,
                               seed=seed)
    k2 = estimate_kingman_qr(drv, cfg=cfg_same, threads=threads)
    b2 = estimate_block_svd(drv, cfg=cfg_same, threads=threads)
    same_gap = float(np.max(np.abs(k2.coords - b2.coords)))
    results.append(_result("block-svd-same-stream", same_gap <= 1e-6,
                           {"max_coord_diff": same_gap, "tolerance": 1e-6}))

    # Zariski-dense scenarios: the two estimators agree and the spectrum is simple
    for name in ("sl2_iid_unipotent", "sl3_zariski_dense"):
        drv = scenarios.driver(name, seed)
        king = estimate_kingman_qr(drv, cfg=cfg, threads=threads)
        iwa = estimate_iwasawa_formula(drv, cfg=cfg, threads=threads)
        results.append(_agreement_row(f"agreement-{name}", king, iwa,
                                      extra={"lambda_top": float(king.coords[0])}))
        rs = RootSystemInfo(drv.model)
        for est, tag in ((king, "kingman"), (iwa, "iwasawa")):
            rep = simplicity_report(est, rs)
            results.append(_result(f"simple-{name}-{tag}", rep.verdict == "simple",
                                   {"min_gap": rep.min_gap,
                                    "max_gap_3sigma": float(3 * rep.gap_stderr.max()),
                                    "verdict_simple": float(rep.simple)}))
    return results


def suite_transform_laws(seed: int = 0, n_steps: int = 40_000,
                         n_trajectories: int = 48, threads: int = 1) -> list:
    results = []
    cfg = EstimatorConfig(n_steps=n_steps, n_trajectories=n_trajectories,
                          burn_in=500, seed=seed)
    cfg_ind = EstimatorConfig(n_steps=n_steps // 2, n_trajectories=n_trajectories,
                              burn_in=500, seed=seed)

    # Kakutani induction on the depth-1 cylinder {x0 = 1} of Bernoulli(1/2,1/2)
    parent = scenarios.bernoulli2_sl2_driver(seed)
    ind = induce(parent, [(1,)])
    ids = np.arange(n_trajectories, dtype=np.int64)
    cur = ind.open(ids)
    cur.forward(2048)
    rts = np.array([np.mean(r[:1024]) for r in cur.return_times])
    meas = ind.pilot_stats(n_steps=8192, n_ids=n_trajectories)
    kac = rts * meas.measure
    kac_mean = float(kac.mean())
    kac_se = float(kac.std(ddof=1) / math.sqrt(len(kac)))
    results.append(_result("kac-identity", abs(kac_mean - 1.0) <= 3 * kac_se,
                           {"mean_return_x_measure": kac_mean,
                            "stderr": kac_se,
                            "measure": meas.measure,
                            "mean_return": float(rts.mean())}))

    base = estimate_kingman_qr(parent, cfg=cfg, threads=threads)
    induced = estimate_kingman_qr(ind, cfg=cfg_ind, threads=threads)
    results.append(_agreement_row("induction-proportionality", induced, base,
                                  scale_b=1.0 / meas.measure,
                                  extra={"measure": meas.measure}))

    # conjugation invariance on the two-state Markov scenario
    markov = scenarios.markov2_sl2_driver(seed)
    s_table = [np.array([[1.0, 0.7], [0.0, 1.0]]),
               np.array([[1.0, 0.0], [-0.4, 1.0]])]
    conj = conjugate(markov, s_table)
    base_m = estimate_kingman_qr(markov, cfg=cfg, threads=threads)
    conj_est = estimate_kingman_qr(conj, cfg=cfg, threads=threads)
    results.append(_agreement_row("conjugation-invariance", conj_est, base_m))

    # time-t discretization of the suspension flow: spectrum linear in t
    susp = SuspensionGreg(driver=markov, roof=(1.0, 2.0), delta=0.5)
    per_t = {}
    for t in (0.5, 1.0, 2.0):
        stream = discretize_flow(susp, t)
        n_t = max(2000, int(n_steps / (2 * max(t, 1.0))))
        cfg_t = EstimatorConfig(n_steps=n_t, n_trajectories=n_trajectories,
                                burn_in=200, seed=seed)
        per_t[t] = estimate_kingman_qr(stream, cfg=cfg_t, threads=threads)
    for t in (0.5, 2.0):
        results.append(_agreement_row(f"discretization-linearity-t{t}",
                                      per_t[t], per_t[1.0], scale_b=t,
                                      extra={"t": t}))

    # flow/section relation with the Bernoulli base and roof (1, 2)
    susp_b = SuspensionGreg(driver=parent, roof=(1.0, 2.0), delta=0.5)
    section_stream, roof_est = cross_section_greg(susp_b, n_pilot=8192)
    flow_unit = estimate_kingman_qr(discretize_flow(susp_b, 1.0), cfg=cfg,
                                    threads=threads)
    section = estimate_kingman_qr(section_stream, cfg=cfg, threads=threads)
    expect_roof = 1.5
    roof_ok = abs(roof_est.mean - expect_roof) <= 3 * roof_est.stderr
    results.append(_result("roof-integral", roof_ok,
                           {"estimate": roof_est.mean, "stderr": roof_est.stderr,
                            "expected": expect_roof}))
    results.append(_agreement_row("flow-section-consistency", section, flow_unit,
                                  scale_b=roof_est.mean,
                                  extra={"roof_integral": roof_est.mean}))
    return results


def suite_drift(seed: int = 0, n_steps: int = 40_000,
                n_trajectories: int = 48, threads: int = 1) -> list:
    results = []

    # compact image: zero drift, exactly in theory
    rot = scenarios.rotation_compact_driver(seed)
    cfg = EstimatorConfig(n_steps=n_steps, n_trajectories=n_trajectories,
                          burn_in=500, seed=seed)
    est = estimate_kingman_qr(rot, cfg=cfg)
    bound = 3 * est.stderr + 1e-12
    results.append(_result("compact-image-zero-drift",
                           bool(np.all(np.abs(est.coords) <= bound)),
                           {"max_abs_lambda": float(np.max(np.abs(est.coords))),
                            "max_allowed": float(bound.max())}))

    # Zariski-dense SL2: positive top exponent
    drv = scenarios.sl2_iid_unipotent_driver(seed)
    cfg_full = EstimatorConfig(n_steps=n_steps, n_trajectories=n_trajectories,
                               burn_in=0, seed=seed)
    cfg_half = EstimatorConfig(n_steps=n_steps // 2, n_trajectories=n_trajectories,
                               burn_in=0, seed=seed)
    full = estimate_kingman_qr(drv, cfg=cfg_full, threads=threads)
    half = estimate_kingman_qr(drv, cfg=cfg_half, threads=threads)
    pos_ok = full.coords[0] > 3 * full.stderr[0]
    results.append(_result("zariski-dense-positive-drift", bool(pos_ok),
                           {"lambda_top": float(full.coords[0]),
                            "threshold_3sigma": float(3 * full.stderr[0])}))

    # Kesten checks agree with the sign verdicts.  Partial sums at every
    # requested horizon share the increment streams (same seed, zero burn-in).
    def make_partials(driver, cache):
        def partial_sums(m):
            if m not in cache:
                cfg_q = EstimatorConfig(n_steps=m, n_trajectories=n_trajectories,
                                        burn_in=0, seed=seed)
                est_q = estimate_kingman_qr(driver, cfg=cfg_q, threads=threads)
                cache[m] = est_q.per_trajectory_matrix()[:, 0] * m
            return cache[m]
        return partial_sums

    sl2_cache = {n_steps: full.per_trajectory_matrix()[:, 0] * n_steps,
                 n_steps // 2: half.per_trajectory_matrix()[:, 0] * (n_steps // 2)}
    kest = kesten_drift_check(full.per_trajectory_matrix()[:, 0],
                              make_partials(drv, sl2_cache),
                              checkpoints=(n_steps // 2, n_steps))
    results.append(_result("kesten-positive", kest.verdict == "POSITIVE",
                           {"mean": kest.mean, "stderr": kest.stderr,
                            "fraction_diverging": kest.fraction_diverging}))

    rot_est = estimate_kingman_qr(rot, cfg=EstimatorConfig(
        n_steps=n_steps, n_trajectories=n_trajectories, burn_in=0, seed=seed))
    kest0 = kesten_drift_check(rot_est.per_trajectory_matrix()[:, 0],
                               make_partials(rot, {}),
                               checkpoints=(n_steps // 2, n_steps))
    results.append(_result("kesten-compact-zero", kest0.verdict in ("ZERO",
                                                                    "INCONCLUSIVE"),
                           {"mean": kest0.mean, "stderr": kest0.stderr,
                            "verdict_zero": float(kest0.verdict == "ZERO")}))
    return results


def run_suite(name: str, seed: int = 0, threads: int = 1) -> list:
    if name == "liealg-identities":
        return suite_liealg_identities(seed)
    if name == "estimator-agreement":
        return suite_estimator_agreement(seed, threads=threads)
    if name == "transform-laws":
        return suite_transform_laws(seed, threads=threads)
    if name == "drift":
        return suite_drift(seed, threads=threads)
    raise InvalidArgument(f"unknown suite {name!r}; known: {list(SUITE_NAMES)} or 'all'")


def run_suites(name: str, seed: int = 0, threads: int = 1) -> list:
    names = SUITE_NAMES if name == "all" else (name,)
    results = []
    for n in names:
        results.extend(run_suite(n, seed, threads))
    return results
