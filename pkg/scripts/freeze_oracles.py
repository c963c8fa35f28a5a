"""Recompute the frozen reference constants used by the test suite.

Every value is evaluated independently of the package at 50 significant
digits with mpmath (direct sums over all configurations, closed-form
integrals, hand-derived formulas) and written to
``tests/data/oracle_values.json``. Run after changing a reference instance:

    python scripts/freeze_oracles.py
"""
from __future__ import annotations

import itertools
import json
from pathlib import Path

import mpmath as mp

mp.mp.dps = 50
OUT = Path(__file__).resolve().parents[1] / "tests" / "data" / "oracle_values.json"


def entropy(p):
    return -mp.fsum(x * mp.log(x) for x in p if x > 0)


def kl(p, q):
    return mp.fsum(x * mp.log(x / y) for x, y in zip(p, q) if x > 0)


def ising_sum(n, theta, weight=lambda s: 1):
    """Sum over all 2**n periodic configurations of weight * exp(theta * S)."""
    total = mp.mpf(0)
    for x in itertools.product((1, -1), repeat=n):
        S = sum(x[j] * x[(j + 1) % n] for j in range(n))
        total += weight(S) * mp.e ** (theta * S)
    return total


def main():
    v = {}
    h = mp.mpf(1) / 2
    q = mp.mpf(1) / 4
    v["entropy_half_quarter_quarter"] = entropy([h, q, q])
    v["entropy_uniform_4"] = mp.log(4)
    v["kl_three_quarters_vs_half"] = kl([mp.mpf(3) / 4, q], [h, h])
    v["hier_entropy_uniform4_pair"] = mp.log(4) + mp.log(2)

    # escort of (0.8, 0.2) at 1/2 and generalized escort example
    a, b = mp.sqrt(mp.mpf("0.8")), mp.sqrt(mp.mpf("0.2"))
    v["escort_08_02_half_Z"] = a + b
    v["escort_08_02_half_q0"] = a / (a + b)
    v["gen_escort_08_02_Z"] = 2 * mp.sqrt(mp.mpf("0.16"))

    # two-point Gibbs: E[L] = 1/(1+e^lam) = 1/4
    v["two_point_lambda_star"] = mp.log(3)
    v["two_point_logZ_at_ln3"] = mp.log(1 + mp.e ** (-mp.log(3)))

    # spin chains
    v["theta_step_1_1"] = mp.log(mp.cosh(2)) / 2
    v["theta_step_1_half"] = mp.log(mp.cosh(2)) / 4
    v["transfer_logZ_n4_theta1"] = mp.log(ising_sum(4, 1))
    v["transfer_logZ_n8_theta_half"] = mp.log(ising_sum(8, h))
    v["cyclic_energy_n4_theta1"] = ising_sum(4, 1, weight=lambda S: S) / ising_sum(4, 1)

    # gaussian: scalar Schur recursion A' = A - B^2/A, B' = B - B^2/A from (2, 1)
    A, B = mp.mpf(2), mp.mpf(1)
    As, Bs = [A], [B]
    for _ in range(2):
        S = B * B / A
        A, B = A - S, B - S
        As.append(A)
        Bs.append(B)
    v["schur_scalar_A_seq"] = As
    v["schur_scalar_B_seq"] = Bs
    # k=1, d=2, sigma=(1,1), A=1, B=0: level 1 is exp(-lam (x1^2 + x2^2)); its
    # one-block marginal escorted by 1/2 is exp(-(lam/2) u^2), so the kept block
    # has E[u^2] = 1/lam and the appended block E = 1/(2 lam). The total
    # 3/(2 lam) equals mu=1 at lambda* = 3/2. For d=1, E = 1/(2 lam): 1/2.
    v["gaussian_lambda_star_k1_d2_equal_mu1"] = mp.mpf(3) / 2
    v["gaussian_lambda_star_k1_d1_mu1"] = mp.mpf(1) / 2
    # Beta(2,2) density at 1/2
    v["beta22_log_density_half"] = mp.log(6 * h * h)

    doc = {k: ([float(x) for x in val] if isinstance(val, list) else float(val)) for k, val in v.items()}
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    print(f"wrote {len(doc)} values to {OUT}")


if __name__ == "__main__":
    main()
