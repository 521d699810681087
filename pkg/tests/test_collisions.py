import numpy as np
import pytest

from rbdnet import collisions, dynamics
from rbdnet.bodies import BodyParams, Environment, RigidBodyState, SystemState
from rbdnet.errors import DegenerateContactError, SeparatingContactError


def make_pair(x2=0.9, v1=(1, 0, 0), v2=(0, 0, 0), m1=1.0, m2=1.0,
              r1=0.5, r2=0.5, restitution=1.0, w1=(0, 0, 0), w2=(0, 0, 0)):
    b1 = RigidBodyState([0, 0, 0], [1, 0, 0, 0], v1, w1)
    b2 = RigidBodyState([x2, 0, 0], [1, 0, 0, 0], v2, w2)
    return SystemState(
        [b1, b2],
        [BodyParams.solid_sphere(m1, r1), BodyParams.solid_sphere(m2, r2)],
        Environment(gravity=[0, 0, 0], restitution=restitution))


def test_detect_separated_and_touching():
    assert collisions.detect_contacts(make_pair(x2=1.1)) == []
    # exact touching is not overlap (strict inequality)
    assert collisions.detect_contacts(make_pair(x2=1.0)) == []


def test_detect_overlap_geometry():
    contacts = collisions.detect_contacts(make_pair(x2=0.9))
    assert len(contacts) == 1
    c = contacts[0]
    assert (c.i, c.j) == (0, 1)
    assert abs(c.penetration - 0.1) <= 1e-14
    assert np.allclose(c.normal, [-1.0, 0, 0])
    assert np.allclose(c.point, [0.45, 0, 0])
    assert abs(np.linalg.norm(c.normal) - 1.0) <= 1e-12


def test_detect_degenerate_centers():
    with pytest.raises(DegenerateContactError):
        collisions.detect_contacts(make_pair(x2=1e-12))


def test_relative_velocity_cases():
    sys = make_pair(v1=(0, 0, 0))
    c = collisions.detect_contacts(sys)[0]
    assert np.allclose(collisions.relative_contact_velocity(c, sys), 0.0)

    sys = make_pair(v1=(1, 0, 0))
    c = collisions.detect_contacts(sys)[0]
    assert np.allclose(collisions.relative_contact_velocity(c, sys), [1, 0, 0])

    sys = make_pair(v1=(0, 0, 0), w1=(0, 0, 1))
    c = collisions.detect_contacts(sys)[0]
    # w x r1 with r1 = (0.45,0,0)
    assert np.allclose(collisions.relative_contact_velocity(c, sys), [0, 0.45, 0])


def test_impulse_magnitude_hand_values():
    sys = make_pair()
    c = collisions.detect_contacts(sys)[0]
    assert abs(collisions.impulse_magnitude(c, sys, 1.0) - 1.0) <= 1e-12
    assert abs(collisions.impulse_magnitude(c, sys, 0.0) - 0.5) <= 1e-12

    sys = make_pair(m2=3.0)
    c = collisions.detect_contacts(sys)[0]
    assert abs(collisions.impulse_magnitude(c, sys, 1.0) - 1.5) <= 1e-12


def test_impulse_rejects_separating():
    sys = make_pair(v1=(-1, 0, 0))
    c = collisions.detect_contacts(sys)[0]
    with pytest.raises(SeparatingContactError):
        collisions.impulse_magnitude(c, sys, 1.0)


def test_resolve_contact_elastic_swap():
    sys = make_pair()
    c = collisions.detect_contacts(sys)[0]
    new, jmag = collisions.resolve_contact(c, sys, 1.0)
    assert np.abs(new.bodies[0].linear_velocity).max() <= 1e-12
    assert np.allclose(new.bodies[1].linear_velocity, [1, 0, 0], atol=1e-12)
    assert jmag >= 0.0


def test_resolve_contact_unequal_masses():
    sys = make_pair(m2=3.0)
    c = collisions.detect_contacts(sys)[0]
    new, _ = collisions.resolve_contact(c, sys, 1.0)
    assert np.allclose(new.bodies[0].linear_velocity, [-0.5, 0, 0], atol=1e-12)
    assert np.allclose(new.bodies[1].linear_velocity, [0.5, 0, 0], atol=1e-12)


def test_resolve_contact_inelastic_symmetric():
    sys = make_pair(v1=(1, 0, 0), v2=(-1, 0, 0), restitution=0.0)
    c = collisions.detect_contacts(sys)[0]
    new, _ = collisions.resolve_contact(c, sys, 0.0)
    assert np.abs(new.bodies[0].linear_velocity).max() <= 1e-12
    assert np.abs(new.bodies[1].linear_velocity).max() <= 1e-12


def test_resolve_contact_restitution_law():
    rng = np.random.default_rng(14)
    for _ in range(300):
        sys = make_pair(v1=tuple(rng.uniform(0.2, 2, 3)), v2=tuple(rng.uniform(-2, -0.2, 3)),
                        m1=rng.uniform(0.5, 2), m2=rng.uniform(0.5, 2),
                        w1=tuple(rng.uniform(-3, 3, 3)), w2=tuple(rng.uniform(-3, 3, 3)))
        c = collisions.detect_contacts(sys)[0]
        eps = rng.uniform(0.0, 1.0)
        vn0 = float(collisions.relative_contact_velocity(c, sys) @ c.normal)
        if vn0 >= 0:
            continue
        new, jmag = collisions.resolve_contact(c, sys, eps)
        vn1 = float(collisions.relative_contact_velocity(c, new) @ c.normal)
        assert jmag >= 0.0
        assert abs(vn1 + eps * vn0) <= 1e-10


def test_resolve_all_empty_and_single():
    sys = make_pair(x2=2.0)
    new, events = collisions.resolve_all(sys)
    assert events == []
    assert np.allclose(new.pack_states(), sys.pack_states())

    sys = make_pair()
    via_all, events = collisions.resolve_all(sys)
    via_one, _ = collisions.resolve_contact(collisions.detect_contacts(sys)[0], sys, 1.0)
    assert len(events) == 1
    assert np.allclose(via_all.pack_states()[:, 7:13], via_one.pack_states()[:, 7:13],
                       atol=1e-14)


def test_resolve_all_newtons_cradle():
    bodies = [RigidBodyState([x, 0, 0], [1, 0, 0, 0], v, [0, 0, 0])
              for x, v in [(0.0, [1.0, 0, 0]), (0.999, [0, 0, 0]), (1.998, [0, 0, 0])]]
    p = BodyParams.solid_sphere(1.0, 0.5)
    sys = SystemState(bodies, [p, p, p], Environment(gravity=[0, 0, 0], restitution=1.0))
    p0, _ = dynamics.total_momentum(sys)
    new, events = collisions.resolve_all(sys)
    p1, _ = dynamics.total_momentum(new)
    assert np.allclose(p0, p1, atol=1e-12)
    # impulse chain hands the velocity to the terminal body
    assert abs(new.bodies[2].linear_velocity[0] - 1.0) <= 1e-9
    assert np.abs(new.bodies[0].linear_velocity).max() <= 1e-9
    assert np.abs(new.bodies[1].linear_velocity).max() <= 1e-9


def test_resolve_all_projection_separates():
    sys = make_pair(x2=0.5, v1=(0, 0, 0), v2=(0, 0, 0))
    new, events = collisions.resolve_all(sys)
    assert events == []  # not approaching: projection only
    gap = np.linalg.norm(new.bodies[0].position - new.bodies[1].position)
    assert abs(gap - (1.0 - collisions.POSITION_SLOP)) <= 1e-12
    # split by inverse mass: equal masses move symmetrically
    assert np.allclose(new.bodies[0].position, -new.bodies[1].position + np.array([0.5, 0, 0]),
                       atol=1e-12)


def test_impulse_nonnegative_randomized():
    rng = np.random.default_rng(15)
    count = 0
    for _ in range(10_000):
        d = rng.uniform(0.3, 0.99)
        sys = make_pair(x2=d, v1=tuple(rng.uniform(-2, 2, 3)), v2=tuple(rng.uniform(-2, 2, 3)),
                        m1=rng.uniform(0.5, 2), m2=rng.uniform(0.5, 2),
                        w1=tuple(rng.uniform(-3, 3, 3)), w2=tuple(rng.uniform(-3, 3, 3)))
        c = collisions.detect_contacts(sys)[0]
        vn = float(collisions.relative_contact_velocity(c, sys) @ c.normal)
        if vn >= 0:
            continue
        count += 1
        assert collisions.impulse_magnitude(c, sys, rng.uniform(0, 1)) >= 0.0
    assert count > 1000  # the sweep actually exercised approaching contacts
