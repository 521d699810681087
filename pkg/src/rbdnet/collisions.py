"""Sphere-sphere contact detection and impulse-based resolution.

Sign convention: for a contact between bodies i < j, the normal n points
from body j toward body i, the relative contact velocity is
(v_i + ω_i×r₁) − (v_j + ω_j×r₂), and an approaching contact has
v_rel·n < 0. The impulse +j·n is applied to body i and −j·n to body j.
This combination conserves momentum and, at restitution 1, kinetic energy.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import math3d
from ._backend import kernels
from .bodies import SystemState
from .errors import DegenerateContactError, SeparatingContactError

MIN_CENTER_DISTANCE = 1e-9
POSITION_SLOP = 1e-4
MAX_SWEEPS = 10

# Verification hook: cmd_verify's negative control flips this to -1.0 to
# prove the elastic-swap oracle catches a corrupted impulse sign.
_impulse_sign = 1.0


@dataclass
class Contact:
    """Geometric description of one overlapping sphere pair (i < j)."""

    i: int
    j: int
    normal: np.ndarray      # unit, points from body j toward body i
    point: np.ndarray       # radius-weighted split of the center segment
    penetration: float
    r1: np.ndarray          # contact point - center_i
    r2: np.ndarray          # contact point - center_j


def _pair_contact(sys: SystemState, i: int, j: int) -> Contact | None:
    ci = sys.bodies[i].position
    cj = sys.bodies[j].position
    d = ci - cj
    dist2 = float(d @ d)
    rsum = sys.params[i].radius + sys.params[j].radius
    if dist2 >= rsum * rsum:
        return None
    dist = np.sqrt(dist2)
    if dist < MIN_CENTER_DISTANCE:
        raise DegenerateContactError(f"degenerate contact between bodies {i} and {j}")
    normal = d / dist
    point = ci + (sys.params[i].radius / rsum) * (cj - ci)
    return Contact(i=i, j=j, normal=normal, point=point,
                   penetration=rsum - dist, r1=point - ci, r2=point - cj)


def detect_contacts(sys: SystemState) -> list[Contact]:
    """All strictly overlapping pairs, in ascending (i, j) order."""
    contacts = []
    n = sys.n_bodies
    for i in range(n - 1):
        for j in range(i + 1, n):
            c = _pair_contact(sys, i, j)
            if c is not None:
                contacts.append(c)
    return contacts


def relative_contact_velocity(contact: Contact, sys: SystemState) -> np.ndarray:
    """Velocity of body i relative to body j at the contact point."""
    bi = sys.bodies[contact.i]
    bj = sys.bodies[contact.j]
    vi = bi.linear_velocity + math3d.cross(bi.angular_velocity, contact.r1)
    vj = bj.linear_velocity + math3d.cross(bj.angular_velocity, contact.r2)
    return vi - vj


def _angular_response(sys: SystemState, body_idx: int, r: np.ndarray, n: np.ndarray) -> float:
    """((I_w⁻¹(r×n))×r)·n for one body, via the body-frame diagonal."""
    body = sys.bodies[body_idx]
    diag = sys.params[body_idx].inertia_body_diag
    q = body.orientation
    rxn = math3d.cross(r, n)
    body_frame = math3d.rotate_fast(math3d.quat_conjugate(q), rxn)
    response = math3d.rotate_fast(q, body_frame / diag)
    return float(math3d.cross(response, r) @ n)


def impulse_magnitude(contact: Contact, sys: SystemState, restitution: float) -> float:
    """Normal impulse resolving an approaching contact, ≥ 0."""
    v_rel = relative_contact_velocity(contact, sys)
    vn = float(v_rel @ contact.normal)
    if vn >= 0.0:
        raise SeparatingContactError(
            f"contact ({contact.i},{contact.j}) is not approaching: v_rel·n={vn}")
    denom = (1.0 / sys.params[contact.i].mass + 1.0 / sys.params[contact.j].mass
             + _angular_response(sys, contact.i, contact.r1, contact.normal)
             + _angular_response(sys, contact.j, contact.r2, contact.normal))
    if denom <= 0.0:
        raise ValueError("nonpositive impulse denominator")
    return -(1.0 + restitution) * vn / denom


def resolve_contact(contact: Contact, sys: SystemState, restitution: float):
    """Apply the collision impulse to both bodies.

    Returns (new SystemState, impulse magnitude).
    """
    jmag = impulse_magnitude(contact, sys, restitution) * _impulse_sign
    jvec = jmag * contact.normal
    states = sys.pack_states()
    i, j = contact.i, contact.j
    states[i, 7:10] += jvec / sys.params[i].mass
    states[j, 7:10] -= jvec / sys.params[j].mass
    for idx, r, sign in ((i, contact.r1, 1.0), (j, contact.r2, -1.0)):
        q = sys.bodies[idx].orientation
        diag = sys.params[idx].inertia_body_diag
        dl = math3d.cross(r, jvec)
        body_frame = math3d.rotate_fast(math3d.quat_conjugate(q), dl)
        states[idx, 10:13] += sign * math3d.rotate_fast(q, body_frame / diag)
    return sys.with_states(states), jmag


def resolve_all(sys: SystemState):
    """Sweep all contacts to rest, then project residual penetration.

    Approaching contacts are resolved sequentially in ascending (i, j)
    order, repeating up to MAX_SWEEPS passes; still-overlapping pairs are
    then pushed apart along the normal, split by inverse mass, leaving
    POSITION_SLOP of overlap. Returns (new SystemState, [(i, j, impulse)]).
    """
    states, events = kernels.resolve_collisions(
        sys.pack_states(), sys.pack_params(), sys.env.restitution,
        sign=_impulse_sign, max_sweeps=MAX_SWEEPS, slop=POSITION_SLOP)
    return sys.with_states(states), events
