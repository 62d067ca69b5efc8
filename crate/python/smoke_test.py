#!/usr/bin/env python3
"""Smoke test for the randamp_py extension module.

Build the extension first, then run this script:

    cargo build -p randamp-py --release
    python3 python/smoke_test.py

The script copies the compiled cdylib next to itself under the importable
name and exercises the main surface.
"""

import math
import os
import shutil
import sys
import tempfile


def load_module():
    here = os.path.dirname(os.path.abspath(__file__))
    repo = os.path.dirname(here)
    candidates = [
        os.path.join(repo, "target", profile, name)
        for profile in ("release", "debug")
        for name in ("librandamp_py.so", "randamp_py.so", "librandamp_py.dylib")
    ]
    built = next((c for c in candidates if os.path.exists(c)), None)
    if built is None:
        sys.exit("extension not built; run: cargo build -p randamp-py")
    stage = tempfile.mkdtemp(prefix="randamp_py_")
    shutil.copy(built, os.path.join(stage, "randamp_py.so"))
    sys.path.insert(0, stage)
    import randamp_py

    return randamp_py


def approx(a, b, tol=1e-9):
    assert abs(a - b) <= tol, f"{a} != {b} (tol {tol})"


def main():
    ra = load_module()

    # Thresholds.
    approx(round(ra.threshold_epsilon1(), 4), 0.0144, 1e-12)
    approx(round(ra.threshold_ky_fan(), 4), 0.0162, 1e-12)
    approx(round(ra.threshold_epsilon2(), 4), 0.0132, 1e-12)
    approx(ra.entropy_constant(), 0.2201, 5e-4)

    # Bound bundle and chain.
    b = ra.setting_prob_bounds(0.1, 1, 4)
    approx(b["p_min"], 1.0 / 9.0, 1e-12)
    approx(b["p_max"], 3.0 / 7.0, 1e-12)
    chain = ra.bound_chain(0.0, 3)
    approx(chain["ratio_lower_bound"], 1.0, 0.0)
    approx(chain["d_upper"], chain["n_settings"] / 2 * chain["delta_true_upper"], 1e-12)

    # Boxes.
    ideal = ra.ChainBox.ideal(8)
    approx(ideal.true_bell_value(), 0.0, 0.0)
    assert ideal.check_no_signaling()
    bad = ra.ChainBox.bad(8, 3)
    approx(bad.true_bell_value(), 1.0 / 8.0, 1e-15)
    quantum = ra.ChainBox.quantum(8)
    approx(quantum.true_bell_value(), ra.delta_q(8), 1e-12)
    mixture = ra.ChainBox.mix([ideal, bad], [0.9, 0.1])
    lam, weights = mixture.lambda_decompose()
    approx(lam, 0.1, 1e-12)
    approx(weights[2], 0.1, 1e-12)
    assert mixture.randomness_distance() <= lam / 2 + 1e-12
    round_trip = ra.ChainBox.from_json(mixture.to_json())
    approx(round_trip.true_bell_value(), mixture.true_bell_value(), 0.0)

    # Source-adapted boxes evade the observed value.
    adapted = [ra.ChainBox.bad(8, s % 8 + 1) for s in range(1, 9)]
    approx(ra.observed_bell_value(adapted, [1 / 8] * 8), 0.0, 0.0)

    # SV sampling respects the band.
    bits, probs = ra.sample_sv_bits(0.1, 1000, "extremal_bernoulli", seed=7)
    assert len(bits) == 1000 and all(p == 0.6 for p in probs)
    try:
        ra.sample_sv_bits(0.1, 10, "adversarial_table", table=[0.75])
        raise AssertionError("table above the SV bound must be rejected")
    except ValueError:
        pass

    # Attack program: simplex agrees with the closed form; the dual
    # certificate is feasible.
    params = ra.derive_attack_params(0.0, 2)
    assert params["m"] == 16 and params["n"] == 8
    lp = ra.solve_lp(0.05, 3, 12)
    opt = ra.closed_form_optimum(0.05, 3, 12)
    approx(lp["optimal_value"], opt["value"], 1e-9)
    cert = ra.dual_certificate(0.05, 3, 12)
    assert cert["feasible"] and cert["min_slack"] >= -1e-9
    approx(cert["objective"], opt["value"], 1e-9)

    # Exhaustive cloud verification.
    report = ra.cloud_verify(0.1, 4, 4)
    assert report["max_q_error"] <= 1e-12
    assert report["max_residual_error"] <= 1e-12

    # Protocol simulation: type-2 attack acceptance near a^2.
    est = ra.estimate_acceptance(8, 20000, supplier="attack", attack_type=2, seed=11)
    a = 1 - 1 / 8
    assert est["ci_low"] <= a * a <= est["ci_high"], est
    bias = ra.estimate_output_bias(
        8, 4000, epsilon=0.1, supplier="attack", attack_type=3,
        deterministic_bad=True, seed=13,
    )
    approx(bias["bias_given_f_bad"], 0.5, 0.0)

    # Toy example witness.
    toy = ra.toy_example()
    approx(toy["mixture_true_bell_value"], 0.5, 0.0)
    assert all(w["excludes_matched_source"] for w in toy["witnesses"])

    print("randamp_py smoke test: all checks passed")


if __name__ == "__main__":
    main()
