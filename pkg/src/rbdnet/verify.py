"""Self-contained oracle suite: conservation, integrator order, gradient
exactness, optimizer arithmetic, and pipeline hygiene.

Each check is independent, seeded, and reports a measured value against
its tolerance. ``run_checks`` powers the ``verify`` CLI command; the
acceptance test suite calls the same functions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import collisions, dynamics, network, scenarios, training
from .bodies import BodyParams, Environment, RigidBodyState, SystemState


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    requirement: str
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f"  ({self.detail})" if self.detail else ""
        return f"[{status}] {self.name}: measured {self.measured:.6g}, requires {self.requirement}{extra}"


def _two_sphere_system(gap: float = 0.99, m1: float = 1.0, m2: float = 1.0,
                       v1=(1.0, 0.0, 0.0), v2=(0.0, 0.0, 0.0),
                       restitution: float = 1.0) -> SystemState:
    b1 = RigidBodyState([0.0, 0.0, 0.0], [1, 0, 0, 0], v1, [0, 0, 0])
    b2 = RigidBodyState([gap, 0.0, 0.0], [1, 0, 0, 0], v2, [0, 0, 0])
    return SystemState([b1, b2],
                       [BodyParams.solid_sphere(m1, 0.5), BodyParams.solid_sphere(m2, 0.5)],
                       Environment(gravity=[0, 0, 0], restitution=restitution))


def check_elastic_swap() -> CheckResult:
    """Equal-mass central elastic hit: velocities swap exactly."""
    sys = _two_sphere_system()
    contact = collisions.detect_contacts(sys)[0]
    new, _ = collisions.resolve_contact(contact, sys, 1.0)
    dev = max(
        float(np.abs(new.bodies[0].linear_velocity - [0.0, 0.0, 0.0]).max()),
        float(np.abs(new.bodies[1].linear_velocity - [1.0, 0.0, 0.0]).max()))
    return CheckResult("elastic_swap", dev <= 1e-12, dev, "<= 1e-12")


def _random_contact_case(rng):
    """Random overlapping, approaching two-body configuration."""
    r1, r2 = rng.uniform(0.2, 0.5, 2)
    m1, m2 = rng.uniform(0.5, 2.0, 2)
    direction = rng.standard_normal(3)
    direction /= np.linalg.norm(direction)
    dist = (r1 + r2) * rng.uniform(0.6, 0.999)
    quats = rng.standard_normal((2, 4))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    bodies = [
        RigidBodyState(np.zeros(3), quats[0], rng.uniform(-2, 2, 3), rng.uniform(-3, 3, 3)),
        RigidBodyState(dist * direction, quats[1], rng.uniform(-2, 2, 3), rng.uniform(-3, 3, 3)),
    ]
    params = [BodyParams(m1, r1, rng.uniform(0.05, 0.4, 3)),
              BodyParams(m2, r2, rng.uniform(0.05, 0.4, 3))]
    eps = 1.0 if rng.random() < 0.5 else rng.uniform(0.0, 1.0)
    sys = SystemState(bodies, params, Environment(gravity=[0, 0, 0], restitution=eps))
    contact = collisions.detect_contacts(sys)[0]
    v_rel = collisions.relative_contact_velocity(contact, sys)
    vn = float(v_rel @ contact.normal)
    if vn >= 0.0:
        # force an approaching contact by adjusting body 1's velocity
        bodies[0] = RigidBodyState(bodies[0].position, bodies[0].orientation,
                                   bodies[0].linear_velocity - (vn + 0.1) * contact.normal,
                                   bodies[0].angular_velocity)
        sys = SystemState(bodies, params, sys.env)
        contact = collisions.detect_contacts(sys)[0]
    return sys, contact, eps


def _kinetic_energy(sys: SystemState) -> float:
    zero_g = SystemState(sys.bodies, sys.params,
                         Environment(gravity=[0, 0, 0], restitution=sys.env.restitution))
    return dynamics.total_energy(zero_g)


def _momentum_about(sys: SystemState, point: np.ndarray):
    from . import math3d
    l = np.zeros(3)
    for body, params in zip(sys.bodies, sys.params):
        i_world = math3d.inertia_world(body.orientation, params.inertia_body_diag)
        l += math3d.cross(body.position - point, params.mass * body.linear_velocity)
        l += i_world @ body.angular_velocity
    return l


def check_conservation_suite(cases: int = 10_000, seed: int = 123) -> list[CheckResult]:
    """Momentum, angular momentum about contact, and energy over random contacts."""
    rng = np.random.default_rng(seed)
    worst_dp = 0.0
    worst_dl = 0.0
    worst_elastic = 0.0
    worst_gain = -np.inf
    worst_restitution = 0.0
    for _ in range(cases):
        sys, contact, eps = _random_contact_case(rng)
        v_rel_before = float(collisions.relative_contact_velocity(contact, sys)
                             @ contact.normal)
        new, _jmag = collisions.resolve_contact(contact, sys, eps)
        # also push the same system through the production sweep
        swept, _ = collisions.resolve_all(sys)
        p0, _ = dynamics.total_momentum(sys)
        for resolved in (new, swept):
            p1, _ = dynamics.total_momentum(resolved)
            scale = sum(p.mass * float(np.linalg.norm(b.linear_velocity))
                        for b, p in zip(sys.bodies, sys.params)) + 1.0
            worst_dp = max(worst_dp, float(np.linalg.norm(p1 - p0)) / (1e-10 * scale))
        l0 = _momentum_about(sys, contact.point)
        l1 = _momentum_about(new, contact.point)
        worst_dl = max(worst_dl, float(np.linalg.norm(l1 - l0))
                       / max(float(np.linalg.norm(l0)), 1.0))
        ke0 = _kinetic_energy(sys)
        ke1 = _kinetic_energy(new)
        if eps == 1.0:
            worst_elastic = max(worst_elastic, abs(ke1 - ke0) / ke0)
        else:
            worst_gain = max(worst_gain, (ke1 - ke0) / max(ke0, 1.0))
        v_rel_after = float(collisions.relative_contact_velocity(contact, new)
                            @ contact.normal)
        worst_restitution = max(worst_restitution,
                                abs(v_rel_after + eps * v_rel_before))
    return [
        CheckResult("momentum_conservation", worst_dp <= 1.0, worst_dp,
                    "<= 1 (units of 1e-10 x momentum scale)"),
        CheckResult("angular_momentum_about_contact", worst_dl <= 1e-9, worst_dl, "<= 1e-9"),
        CheckResult("energy_conservation_elastic", worst_elastic <= 1e-9, worst_elastic,
                    "<= 1e-9 relative"),
        CheckResult("energy_never_gained_inelastic", worst_gain <= 1e-12, worst_gain,
                    "<= 1e-12 relative"),
        CheckResult("restitution_law", worst_restitution <= 1e-10, worst_restitution,
                    "<= 1e-10 (|v_n' + eps*v_n|)"),
    ]


def _spin_endpoint(h: float, duration: float = 1.0) -> np.ndarray:
    body = RigidBodyState([0, 0, 0], [1, 0, 0, 0], [0, 0, 0], [2.0, 1.0, 0.5])
    params = BodyParams(1.0, 0.5, [1.0, 2.0, 3.0])
    sys = SystemState([body], [params], Environment(gravity=[0, 0, 0]))
    steps = round(duration / h)
    states, _, _ = dynamics.kernels.simulate_path(
        sys.pack_states(), sys.pack_params(), sys.env.pack(), h, steps, steps)
    return states[-1, 0]


def _endpoint_error(a: np.ndarray, ref: np.ndarray) -> float:
    qa = a[3:7].copy()
    if float(qa @ ref[3:7]) < 0.0:
        qa = -qa
    return float(np.sqrt(((qa - ref[3:7]) ** 2).sum() + ((a[10:13] - ref[10:13]) ** 2).sum()))


def check_rk4_order() -> CheckResult:
    """Torque-free anisotropic tumble: halving h divides the endpoint error
    by ~16 (observed fourth-order convergence)."""
    ref = _spin_endpoint(1e-6)
    err_coarse = _endpoint_error(_spin_endpoint(0.01), ref)
    err_fine = _endpoint_error(_spin_endpoint(0.005), ref)
    ratio = err_coarse / err_fine
    return CheckResult("rk4_order", 12.0 <= ratio <= 20.0, ratio, "in [12, 20]",
                       detail=f"errors {err_coarse:.3e} -> {err_fine:.3e}")


def check_free_fall() -> CheckResult:
    """Gravity-only trajectory matches closed form exactly (RK4 on quadratics)."""
    body = RigidBodyState([0, 0, 0], [1, 0, 0, 0], [0, 0, 0], [0, 0, 0])
    params = BodyParams.solid_sphere(1.0, 0.2)
    sys = SystemState([body], [params], Environment())
    traj = dynamics.simulate(sys, 1.0, fine_dt=0.02)
    g = 9.81
    worst = 0.0
    for k in range(traj.n_samples):
        t = traj.times[k]
        z_exact = -0.5 * g * t * t
        vz_exact = -g * t
        worst = max(worst, abs(traj.samples[k, 0, 2] - z_exact),
                    abs(traj.samples[k, 0, 9] - vz_exact))
    return CheckResult("free_fall_exact", worst <= 1e-12, worst, "<= 1e-12 m")


def check_quaternion_hygiene(n_scenarios: int = 100, seed: int = 2024) -> list[CheckResult]:
    """Sampled orientations unit to 1e-9; per-step renorm correction < 1e-9."""
    cfg = scenarios.ScenarioConfig()
    worst_norm = 0.0
    worst_renorm = 0.0
    for idx in range(n_scenarios):
        s = scenarios.scenario_seed(seed, idx)
        state = scenarios.sample_scenario(s, cfg)
        traj = dynamics.simulate(state, 5.0)
        norms = np.linalg.norm(traj.samples[:, :, 3:7], axis=2)
        worst_norm = max(worst_norm, float(np.abs(norms - 1.0).max()))
        worst_renorm = max(worst_renorm, traj.max_renorm)
    return [
        CheckResult("sampled_orientations_unit", worst_norm <= 1e-9, worst_norm, "<= 1e-9"),
        CheckResult("per_step_renormalization", worst_renorm < 1e-9, worst_renorm, "< 1e-9"),
    ]


GRADCHECK_EPS = 1e-5
GRADCHECK_FLOOR_FRACTION = 1e-3  # of the largest gradient magnitude


def check_gradient(eps: float = GRADCHECK_EPS) -> CheckResult:
    """Backprop vs central finite differences on a tiny network.

    Relative error uses max(|analytic|, |numeric|, 1e-3 x gradient scale)
    as denominator; near-zero components are measured against the gradient
    scale because per-component relative error is meaningless below the
    float64 noise floor of the loss difference.
    """
    cfg = network.NetworkConfig(input_dim=8, hidden_dim=16, num_blocks=2, output_dim=5,
                                dropout_rate=0.2, init_seed=3)
    params = network.init_network(cfg)
    rng = np.random.default_rng(11)
    x = rng.standard_normal((4, 8))
    t = rng.standard_normal((4, 5))
    mask = np.ones((4, 5))
    mask[0, :2] = 0.0
    drop_masks = [(rng.random((4, 16)) >= cfg.dropout_rate) / (1 - cfg.dropout_rate)
                  for _ in range(cfg.num_blocks)]
    lam = 1e-4

    def loss_of(p):
        y, cache = network.forward(p, x, train=True, dropout_masks=drop_masks)
        return network.regularized_loss(network.loss_mse(y, t, mask), p, lam), cache, y

    loss, cache, y = loss_of(params)
    grads = network.backward(params, cache, y, t, mask, l2=lam)
    gscale = max(float(np.abs(g).max()) for g in grads.values())
    floor = GRADCHECK_FLOOR_FRACTION * gscale
    worst = 0.0
    for name, arr in params.items():
        flat = arr.ravel()
        g = grads[name].ravel()
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            lp, _, _ = loss_of(params)
            flat[i] = old - eps
            lm, _, _ = loss_of(params)
            flat[i] = old
            fd = (lp - lm) / (2.0 * eps)
            rel = abs(fd - g[i]) / max(abs(fd), abs(g[i]), floor)
            worst = max(worst, rel)
    return CheckResult("gradient_check", worst <= 1e-6, worst, "<= 1e-6",
                       detail=f"{sum(a.size for _, a in params.items())} parameters")


def check_adam_oracle() -> CheckResult:
    value = np.array([1.0])
    m = np.zeros(1)
    v = np.zeros(1)
    training.adam_update(value, np.array([0.5]), m, v, t=1, lr=0.001)
    expected = 1.0 - 0.001 * 0.5 / (np.sqrt(0.25) + 1e-8)
    dev = abs(float(value[0]) - expected)
    return CheckResult("adam_unit_oracle", dev <= 1e-12, dev, "<= 1e-12")


def check_lr_schedule() -> CheckResult:
    expected = {0: 0.001, 10: 0.001 * 2.0 ** -0.75, 30: 0.001 * 4.0 ** -0.75}
    worst = max(abs(training.lr_schedule(t) - v) / v for t, v in expected.items())
    return CheckResult("lr_schedule", worst <= 1e-15, worst, "<= 1e-15 relative")


def check_ece_ground_truth(n_scenarios: int = 100, seed: int = 31,
                           horizon: int = 250) -> CheckResult:
    """Fine simulator's own energy drift on conservative scenarios."""
    from .evalbench import PhysicsStepPredictor, energy_conservation_error
    cfg = scenarios.ScenarioConfig(conservative=True)
    runs = scenarios.generate_runs(n_scenarios, seed, cfg)
    substeps = round(dynamics.SAMPLE_DT / dynamics.DEFAULT_FINE_DT)
    fine = PhysicsStepPredictor("ground_truth", substeps=substeps)
    ece = energy_conservation_error(fine, runs, horizon=horizon)
    return CheckResult("ece_ground_truth", ece <= 0.5, ece, "<= 0.5 %")


def check_cumulative_monotonic() -> CheckResult:
    """Cumulative rollout error curves never decrease."""
    from .evalbench import PhysicsStepPredictor, IdentityPredictor, rollout
    cfg = scenarios.ScenarioConfig()
    runs = scenarios.generate_runs(3, 99, cfg, duration=1.0)
    worst = np.inf
    for run in runs:
        for predictor in (PhysicsStepPredictor("rk4_coarse", 1), IdentityPredictor()):
            res = rollout(predictor, run, 50)
            diffs = np.diff(np.concatenate([[0.0], res.e_cumulative]))
            worst = min(worst, float(diffs.min()))
    return CheckResult("cumulative_error_monotonic", worst >= 0.0, worst, ">= 0")


def check_generation_determinism() -> CheckResult:
    """Same seed, same config: byte-identical dataset files."""
    from . import datafile
    cfg = scenarios.ScenarioConfig()
    blobs = []
    for _ in range(2):
        runs = scenarios.generate_runs(8, 5150, cfg, duration=1.0)
        ds = scenarios.build_dataset(runs, 5150)
        blobs.append(datafile._encode_runs(ds.runs)
                     + datafile._encode_sidecar(ds.split, ds.normalizer))
    same = blobs[0] == blobs[1]
    return CheckResult("generation_determinism", same, 0.0 if same else 1.0,
                       "byte-identical across runs")


def check_overfit(max_epochs: int = 2000) -> CheckResult:
    """64-record memorization run reaches 1e-3 x initial loss."""
    cfg = scenarios.ScenarioConfig()
    runs = scenarios.generate_runs(1, 77, cfg, duration=1.5)
    records = scenarios.make_records(runs[0].trajectory)
    rec64 = records.inputs[:64], records.targets[:64]
    norm = scenarios.Normalizer.fit(*rec64)
    x = norm.apply_inputs(rec64[0])
    t = norm.apply_targets(rec64[1], records.masks[:64])
    masks = scenarios.target_mask_matrix(records.masks[:64])
    net_cfg = network.NetworkConfig(init_seed=1)
    params = network.init_network(net_cfg)
    initial = training.eval_loss(params, x, t, masks)
    tc = training.TrainConfig(epochs=max_epochs, batch_size=64,
                              patience=max_epochs, shuffle_seed=1)
    result = training.train(params, x, t, masks, x, t, masks, tc)
    final = training.eval_loss(result.params, x, t, masks)
    ratio = final / initial
    return CheckResult("overfit_sanity", ratio <= 1e-3, ratio,
                       "<= 1e-3 x initial loss",
                       detail=f"initial {initial:.4g} -> best {final:.4g} "
                              f"at epoch {result.best_epoch}")


def run_checks(full: bool = False, corrupt_collision_sign: bool = False) -> list[CheckResult]:
    """Run the oracle suite; `full` adds the slow training checks.

    ``corrupt_collision_sign`` is a negative-control hook: it flips the
    impulse sign so the elastic-swap oracle must fail.
    """
    old_sign = collisions._impulse_sign
    if corrupt_collision_sign:
        collisions._impulse_sign = -1.0
    try:
        results = [check_elastic_swap()]
        results.extend(check_conservation_suite())
        results.append(check_rk4_order())
        results.append(check_free_fall())
        results.extend(check_quaternion_hygiene())
        results.append(check_gradient())
        results.append(check_adam_oracle())
        results.append(check_lr_schedule())
        results.append(check_ece_ground_truth())
        results.append(check_cumulative_monotonic())
        results.append(check_generation_determinism())
        if full:
            results.append(check_overfit())
        return results
    finally:
        collisions._impulse_sign = old_sign
