"""
Example script demonstrating how to use the mechanics engine
"""

import numpy as np

from mechanics.constraint_algo import dirac_iterate
from mechanics.integrator import Gauge, drift_report, integrate
from mechanics.legendre import hyperregular_probe, legendre_map, slow_legendre
from mechanics.genfun import morse_rank_ok
from mechanics.systems import build_system, statics_constitutive


def run_walkthrough():
    """Statics, constraint analysis, Legendre probe and one integration"""

    print("=" * 60)
    print("Implicit Mechanics Example")
    print("=" * 60)

    # Statics: point tied elastically to a circle, both force branches
    print("\nElastic circle at (1.5, 0.5):")
    outcome = statics_constitutive(3, [1.5, 0.5])
    for covector in outcome['covectors']:
        print(f"  theta = {covector.witness[0]:>8.4f}   f, g = {covector.p[0]:>8.4f}, {covector.p[1]:>8.4f}")

    # Constraint algorithm on the interacting pair
    print("\nTwo-particle system, quadratic potential:")
    pair = build_system('two-particle', {'V': 'quadratic'})
    report = dirac_iterate(pair.family, pair.constraints, pair.sampler, samples=16, seed=0,
                           excluded=pair.excluded)
    print(f"  Verdict:               {report.verdict}")
    print(f"  Secondary constraints: {report.secondary_count}")
    print(f"  Multiplier conditions: {report.multiplier_conditions}")

    # The relativistic Lagrangian is singular, its energy family is still a Morse family
    print("\nRelativistic particle:")
    particle = build_system('relativistic')
    rng = np.random.default_rng(0)
    tangents = [particle.tangent_sampler(rng)[0] for _ in range(10)]
    probe = hyperregular_probe(particle.lagrangian, tangents)
    print(f"  Legendre map:          {probe['verdict']}")
    fam = slow_legendre(particle.lagrangian)
    x = tangents[0]
    p = legendre_map(particle.lagrangian, x).p
    ok, rank = morse_rank_ok(fam, np.concatenate([x.q, p]), x.v)
    print(f"  Energy family rank:    {rank} ({'ok' if ok else 'deficient'})")

    traj = integrate(particle.dirac, Gauge.unit(), particle.initial_state, 1e-3, 1000)
    drift = drift_report(traj, particle.constraints)
    print(f"  Final position:        {np.round(traj.q[-1], 6)}")
    print(f"  Max constraint drift:  {drift['max']:.2e}")

    print("\n" + "=" * 60)
    print("Walkthrough Complete!")
    print("=" * 60)


if __name__ == '__main__':
    run_walkthrough()
