"""Local (jet-density) certificate searches over lattice field spaces.

These are the physical counterparts of the chart-space searches: the
unknowns range over densities of single-site jets, so a certificate means
the counterterm or matching one-form is a genuinely local object. The
generic bundle and holonomy machinery provides all targets; locality only
restricts the search space, never the checks.
"""

from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

from .bundle import Section, check_cocycle, connection_report, infinitesimal_anomaly
from .geometry import CircleValue, line_integral
from .holonomy import equivariant_holonomy, random_class_path
from .lattice import (
    LocalDensity,
    LocalFunctional,
    LocalOneForm,
    density_basis,
    one_form_density_basis,
    random_fields,
)
from .probes import rng_for
from .solvers import (
    Certificate,
    NoCertificate,
    SolverConfig,
    StageRecord,
    Verdict,
    _lstsq_with_lifts,
    _result_data,
)


def _functional_basis(model, cfg: SolverConfig, trig: bool = False):
    named = density_basis(model.lattice, model.jet_order, model.density_degree, trig=trig)
    return [(name, LocalFunctional(dens, name=name)) for name, dens in named]


def _flow_slope(functional, lie_element, s, step=1e-3):
    def slope(h):
        return (
            functional(lie_element.flow_at(h, s)) - functional(lie_element.flow_at(-h, s))
        ) / (2 * h)

    d1, d2 = slope(step), slope(step / 2)
    return (4.0 * d2 - d1) / 3.0


def solve_local_lie_coboundary(
    model,
    section: Section,
    cfg: SolverConfig,
    basis: Optional[Sequence[Tuple[str, LocalFunctional]]] = None,
):
    """Search for a local functional whose flow derivative matches the anomaly.

    Unknowns are jet-density functionals; targets come from the generic flow
    derivative of the cocycle at seeded probe fields. The residual floor of
    a failed search is reported; it never proves nonexistence.
    Returns ``(result, functional_or_None)``.
    """
    bundle = model.bundle
    bundle.require_lie()
    if basis is None:
        basis = _functional_basis(model, cfg)
    names = [name for name, _ in basis]
    functionals = [f for _, f in basis]
    rng = rng_for(cfg.seed, "local-lie-fit")
    n_fit = max(16, 2 * len(functionals))
    fit_fields = random_fields(model.lattice, n_fit, rng)
    anomalies = {
        label: infinitesimal_anomaly(bundle, section, label) for label in bundle.lie_generators
    }
    rows, targets = [], []
    for label, X in bundle.lie_generators.items():
        anomaly = anomalies[label]
        for s in fit_fields:
            rows.append([_flow_slope(f, X, s) for f in functionals])
            targets.append(anomaly(s))
    coef, fit_res, cond = _lstsq_with_lifts(
        rows, targets, [False] * len(targets), cfg, polish_budget=max(cfg.fit_tol, 1e-9)
    )
    combined = LocalFunctional(
        LocalDensity(
            model.lattice,
            (lambda members: lambda env: sum(c * f.density.fn(env) for c, f in members))(
                list(zip(coef, functionals))
            ),
            model.jet_order,
            name="fit",
        ),
        name="fit",
    )
    hold_rng = rng_for(cfg.seed, "local-lie-holdout")
    hold_fields = random_fields(model.lattice, max(12, len(functionals)), hold_rng)
    holdout = 0.0
    for label, X in bundle.lie_generators.items():
        anomaly = anomalies[label]
        for s in hold_fields:
            holdout = max(holdout, abs(anomaly(s) - _flow_slope(combined, X, s)))
    coefficients = dict(zip(names, (float(c) for c in coef)))
    description = f"local jet densities: {len(names)} members, degree <= {model.density_degree}"
    if fit_res <= max(cfg.fit_tol, 1e-9) and holdout <= max(cfg.holdout_tol, 1e-8):
        return Certificate(coefficients, fit_res, holdout, description, cond), combined
    return NoCertificate(fit_res, holdout, description), None


def solve_local_global_form(
    model,
    section: Section,
    cfg: SolverConfig,
    basis: Optional[Sequence[Tuple[str, LocalOneForm]]] = None,
    slots: Optional[Sequence[int]] = None,
):
    """Search for an invariant local one-form matching every holonomy.

    Rows: path integrals against holonomies over generator words (circle
    targets with integer lifts), invariance under every group generator at
    probe fields, and exactness of the fit against the curvature on probe
    direction pairs. Held-out validation uses fresh paths.
    Returns ``(result, local_one_form_or_None)``.
    """
    bundle = model.bundle
    space = model.space
    if basis is None:
        basis = one_form_density_basis(
            model.lattice, model.jet_order, model.density_degree, slots=slots
        )
    names = [name for name, _ in basis]
    members = [b for _, b in basis]
    member_forms = [b.as_form(space) for b in members]
    rho = model.connection.rho(section)

    fit_words = []
    for label in bundle.action.labels:
        fit_words.append(((label, 1),))
        fit_words.append(((label, -1),))
    holdout_words = list(fit_words)
    for label in bundle.action.labels:
        for power in range(2, min(cfg.max_word_len, 3) + 1):
            holdout_words.append(((label, 1),) * power)

    rng = rng_for(cfg.seed, "local-global-paths")
    base_fields = random_fields(model.lattice, 4, rng_for(cfg.seed, "local-global-bases"))
    rows, targets, circle_mask, circle_groups = [], [], [], []
    for wi, word in enumerate(fit_words):
        for s0 in base_fields:
            path = random_class_path(
                space, bundle.action, word, s0, rng, samples=cfg.path_samples, amplitude=0.15
            )
            hol = equivariant_holonomy(
                bundle, model.connection, section, word, path, method="formula"
            )
            rows.append([line_integral(f, path) for f in member_forms])
            targets.append(hol.value.value)
            circle_mask.append(True)
            circle_groups.append(wi)
    inv_fields = random_fields(model.lattice, 4, rng_for(cfg.seed, "local-global-inv"))
    inv_vars = random_fields(model.lattice, 3, rng_for(cfg.seed, "local-global-vars"))
    for label in bundle.action.labels:
        g = bundle.action.generators[label]
        for s in inv_fields:
            gs = g(s)
            for v in inv_vars:
                push = g.differential(s, v)
                rows.append([f(gs, push) - f(s, v) for f in member_forms])
                targets.append(0.0)
                circle_mask.append(False)
                circle_groups.append(-1)
    h = space.fd_step
    for s in inv_fields[:2]:
        for i in range(len(inv_vars) - 1):
            v1, v2 = inv_vars[i], inv_vars[i + 1]

            def curl(form):
                a = (form(s + h * v1, v2) - form(s - h * v1, v2)) / (2 * h)
                b = (form(s + h * v2, v1) - form(s - h * v2, v1)) / (2 * h)
                return a - b

            rows.append([curl(f) for f in member_forms])
            targets.append(curl(rho))
            circle_mask.append(False)
            circle_groups.append(-1)

    coef, fit_res, cond = _lstsq_with_lifts(
        rows, targets, circle_mask, cfg, circle_groups,
        polish_budget=max(cfg.fit_tol, 1e-8) * 10,
    )
    zero = LocalDensity(model.lattice, lambda env: 0.0, model.jet_order, name="0")
    slot_count = model.jet_order + 1
    combined_slots = []
    for k in range(slot_count):
        terms = [
            (c, b.slot_densities[k])
            for c, b in zip(coef, members)
            if k < len(b.slot_densities)
        ]
        combined_slots.append(
            LocalDensity(
                model.lattice,
                (lambda tt: lambda env: sum(c * d.fn(env) for c, d in tt))(terms),
                model.jet_order,
                name=f"slot{k}",
            )
            if terms
            else zero
        )
    beta_local = LocalOneForm(model.lattice, combined_slots, name="fit")
    beta_form = beta_local.as_form(space)

    hold_rng = rng_for(cfg.seed, "local-global-holdout")
    hold_bases = random_fields(model.lattice, 2, rng_for(cfg.seed, "local-global-hbases"))
    holdout = 0.0
    for word in holdout_words:
        for s0 in hold_bases:
            path = random_class_path(
                space, bundle.action, word, s0, hold_rng, samples=cfg.path_samples, amplitude=0.15
            )
            hol = equivariant_holonomy(
                bundle, model.connection, section, word, path, method="formula"
            )
            holdout = max(holdout, hol.value.distance(CircleValue(line_integral(beta_form, path))))
    coefficients = dict(zip(names, (float(c) for c in coef)))
    description = (
        f"local one-form densities: {len(names)} members, degree <= {model.density_degree}"
        + (f", slots {list(slots)}" if slots is not None else "")
    )
    if fit_res <= max(cfg.fit_tol, 1e-8) * 10 and holdout <= max(cfg.holdout_tol, 1e-7) * 10:
        return Certificate(coefficients, fit_res, holdout, description, cond), beta_local
    return NoCertificate(fit_res, holdout, description), None


# ---------------------------------------------------------------------------
# Local verdict pipeline


def local_verdict(model, cfg: SolverConfig, revalidation_paths: int = 8) -> Verdict:
    """Staged local cancellation decision over a lattice field space.

    Stages: cocycle health, declared-connection consistency, the local
    counterterm search along one-parameter generators, the invariant local
    one-form matching all holonomies, and generic revalidation of the
    certificate on fresh paths.
    """
    bundle = model.bundle
    section = model.reference_section
    stages: List[StageRecord] = []
    slots = model.scenario.slot_restriction if model.scenario is not None else None
    ansatz_desc = (
        f"jet densities to degree {model.density_degree} at jet order {model.jet_order}"
    )

    coc = check_cocycle(bundle, word_length=min(cfg.max_word_len, 3), probes=16, seed=cfg.seed)
    stages.append(
        StageRecord(
            "cocycle",
            "pass" if coc.max_residual <= 1e-6 else "fail",
            {"max_residual": coc.max_residual, "checks": coc.checks},
        )
    )
    if coc.max_residual > 1e-6:
        return Verdict(
            "OBSTRUCTED",
            stages,
            obstructed_stage="cocycle",
            witness={"words": coc.witness_words, "point": coc.witness_point},
            ansatz_description=ansatz_desc,
        )

    report = connection_report(bundle, model.connection, section, seed=cfg.seed)
    stages.append(
        StageRecord(
            "equivariant_curvature",
            "pass",
            dict(report.residuals, local_connection_declared=model.declared_rho is not None),
        )
    )

    if bundle.lie_generators:
        lie_result, counterterm = solve_local_lie_coboundary(model, section, cfg)
        status = "certificate" if lie_result.found else "no_certificate"
        stages.append(StageRecord("local_counterterm", status, _result_data(lie_result)))
        if not lie_result.found:
            return Verdict(
                "INCONCLUSIVE",
                stages,
                obstructed_stage="local_counterterm",
                ansatz_description=ansatz_desc,
            )
    else:
        stages.append(
            StageRecord("local_counterterm", "skipped", {"reason": "no one-parameter generators"})
        )

    global_result, beta_local = solve_local_global_form(model, section, cfg, slots=slots)
    status = "certificate" if global_result.found else "no_certificate"
    stages.append(StageRecord("local_global_form", status, _result_data(global_result)))
    if not global_result.found:
        return Verdict(
            "INCONCLUSIVE",
            stages,
            obstructed_stage="local_global_form",
            ansatz_description=ansatz_desc,
        )

    beta_form = beta_local.as_form(model.space)
    rng = rng_for(cfg.seed, "local-reval")
    bases = random_fields(model.lattice, 2, rng_for(cfg.seed, "local-reval-bases"))
    words = [((label, 1),) for label in bundle.action.labels] + [
        ((label, -1),) for label in bundle.action.labels
    ]
    hol_res = 0.0
    count = 0
    while count < revalidation_paths:
        word = words[count % len(words)]
        s0 = bases[count % len(bases)]
        path = random_class_path(
            model.space, bundle.action, word, s0, rng, samples=cfg.path_samples, amplitude=0.15
        )
        hol = equivariant_holonomy(bundle, model.connection, section, word, path, method="formula")
        hol_res = max(hol_res, hol.value.distance(CircleValue(line_integral(beta_form, path))))
        count += 1
    ok = hol_res <= 1e-5
    stages.append(
        StageRecord(
            "revalidation",
            "pass" if ok else "fail",
            {"holonomy_residual": hol_res, "paths": revalidation_paths},
        )
    )
    if not ok:
        return Verdict(
            "INCONCLUSIVE",
            stages,
            obstructed_stage="revalidation",
            ansatz_description=ansatz_desc,
        )
    certificate = {
        "local_form_coefficients": {
            k: v for k, v in global_result.coefficients.items() if abs(v) > 1e-9
        },
        "holonomy_residual": hol_res,
    }
    return Verdict("CANCELS", stages, certificate=certificate, ansatz_description=ansatz_desc)
