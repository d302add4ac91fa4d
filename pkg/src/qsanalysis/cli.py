"""Command-line entry point.

Exit codes:
  0  success (also: data compatible, state is a PPT mixture)
  1  usage or data error
  2  systematic error detected
  3  genuine multipartite entanglement certified
  4  solver failure
  5  information projection did not converge
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import core, documents as docs, expfam, gme, model, systest, tomo

SEED_ENV = "QSA_SEED"

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INCOMPATIBLE = 2
EXIT_GME = 3
EXIT_SOLVER = 4
EXIT_NOT_CONVERGED = 5


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw, 0)
    except ValueError:
        raise docs.DocumentError(f"environment variable {SEED_ENV}={raw!r} is not an integer") from None


def _emit(doc: docs.Document, out: str | None) -> None:
    text = docs.dumps(doc)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _seed(args) -> int:
    return args.seed if args.seed is not None else default_seed()


# systest


def cmd_systest(args) -> int:
    mdl = docs.model_from_document(docs.read(args.model, "model"))
    counts = docs.counts_from_document(docs.read(args.counts, "counts"))
    counts.check_against(mdl)
    rep = systest.split_test(counts, mdl, args.alpha, args.kind, _seed(args))
    body = {
        "statistic": rep.statistic,
        "threshold": rep.threshold,
        "alpha": rep.alpha,
        "p_value": rep.p_value,
        "verdict": rep.verdict,
        "train_value": rep.train_value,
        "witness": {"kind": rep.witness.kind, "c_w_sq": rep.witness.c_w_sq, "w": rep.witness.w},
        "split": rep.split_spec,
    }
    _emit(docs.report_document("systest", body, _seed(args)), args.out)
    print(f"{rep.verdict}: statistic {rep.statistic:.6g}, threshold {rep.threshold:.6g}, p-value {rep.p_value:.3g}", file=sys.stderr)
    return EXIT_INCOMPATIBLE if rep.verdict == systest.INCOMPATIBLE else EXIT_OK


# tomo


def cmd_tomo(args) -> int:
    mdl = docs.model_from_document(docs.read(args.model, "model"))
    counts = docs.counts_from_document(docs.read(args.counts, "counts"))
    counts.check_against(mdl)
    extra = {}
    if args.estimator == "lin":
        est = tomo.linear_inversion(counts, tomo.build_reconstruction(mdl))
        state, physical = est.op, est.is_physical
        extra["min_eigenvalue"] = est.min_eigenvalue
    else:
        est = tomo.ml_estimate(counts, mdl, tol=args.tol)
        state, physical = est.state, True
        extra.update(log_likelihood=est.log_likelihood, iterations=est.iterations, converged=est.converged)
    if args.target_state:
        psi = docs.pure_state_from_document(docs.read(args.target_state, "state"))
        extra["fidelity"] = core.fidelity_pure(psi, state)
        extra["fidelity_lower_bound"] = tomo.fidelity_lower_confidence(counts, mdl, psi, args.alpha)
        extra["alpha"] = args.alpha
    doc = docs.state_document(state, f"{args.estimator} estimate", physical, seed=counts.seed)
    doc.payload["estimator"] = args.estimator
    doc.payload.update(docs.to_jsonable(extra))
    _emit(doc, args.out)
    if "fidelity_lower_bound" in extra:
        print(f"fidelity {extra['fidelity']:.6f}, lower bound {extra['fidelity_lower_bound']:.6f} at alpha {args.alpha}", file=sys.stderr)
    return EXIT_OK


# gme


def certificate_document(cert: gme.GmeCertificate, source: str) -> docs.Document:
    payload = {
        "source": source,
        "value": cert.value,
        "dual_gap": cert.dual_gap,
        "verdict": cert.verdict,
        "n": core.num_qubits(cert.witness.shape[0]),
        "witness": docs.encode_matrix(cert.witness),
        "decompositions": [
            {"side_a": list(c.side_a), "cut": str(c), "P": docs.encode_matrix(cert.decompositions[str(c)][0]), "Q": docs.encode_matrix(cert.decompositions[str(c)][1])}
            for c in cert.cuts
        ],
        "solver": {
            "status": cert.solution.status if cert.solution else None,
            "primal_value": cert.solution.primal_value if cert.solution else None,
            "dual_value": cert.solution.dual_value if cert.solution else None,
            "iterations": cert.solution.iterations if cert.solution else None,
        },
    }
    if cert.coefficients is not None:
        payload["coefficients"] = [float(c) for c in cert.coefficients]
    return docs.Document("certificate", docs.to_jsonable(payload), docs.provenance())


def verify_certificate_document(doc: docs.Document, rho=None, expectations=None, tol: float = 1e-6) -> list[str]:
    """Re-check a stored certificate using only matrix arithmetic."""
    p = doc.payload
    w = docs.decode_matrix(docs._need(p, "witness", "payload"), "payload.witness")
    n = core.num_qubits(w.shape[0])
    cuts, decomp = [], {}
    for i, entry in enumerate(docs._need(p, "decompositions", "payload")):
        cut = gme.Bipartition(tuple(entry["side_a"]), n)
        cuts.append(cut)
        decomp[str(cut)] = (docs.decode_matrix(entry["P"], f"payload.decompositions[{i}].P"), docs.decode_matrix(entry["Q"], f"payload.decompositions[{i}].Q"))
    value = float(docs._need(p, "value", "payload"))
    cert = gme.GmeCertificate(value, w, decomp, float(p.get("dual_gap", 0.0)), p["verdict"], cuts)
    issues = cert.check(tol)
    if {str(c) for c in cuts} != {str(c) for c in gme.bipartitions(n)}:
        issues.append("certificate does not cover every bipartition")
    if rho is not None:
        actual = float(np.real(np.trace(rho @ w)))
        if abs(actual - value) > tol:
            issues.append(f"tr(rho W) = {actual:.9g} differs from the stored value {value:.9g}")
    if expectations is not None:
        obs, means = expectations
        lam = np.asarray(p.get("coefficients", []), dtype=float)
        if lam.size != len(obs):
            issues.append("stored coefficients do not match the observables")
        else:
            if np.max(np.abs(np.einsum("i,ijk->jk", lam, np.array(obs)) - w)) > tol:
                issues.append("witness is not the stored combination of observables")
            if abs(float(lam @ np.asarray(means)) - value) > tol:
                issues.append("stored value does not match the expectation data")
    return issues


def cmd_gme(args) -> int:
    rho = expectations = None
    if args.state:
        rho = docs.state_from_document(docs.read(args.state, "state"))
    if args.expectations:
        obs, means, n = docs.expectations_from_document(docs.read(args.expectations, "expectations"))
        expectations = (obs, means)
    if args.verify:
        issues = verify_certificate_document(docs.read(args.verify, "certificate"), rho, expectations, args.verify_tol)
        for msg in issues:
            print(f"verification failed: {msg}", file=sys.stderr)
        if not issues:
            print("certificate verified", file=sys.stderr)
        return EXIT_ERROR if issues else EXIT_OK
    if (rho is None) == (expectations is None):
        print("error: give exactly one of --state or --expectations", file=sys.stderr)
        return EXIT_ERROR
    try:
        if rho is not None:
            cert = gme.pptmix_sdp(rho, tol=args.tol)
            source = "state"
        else:
            cert = gme.pptmix_from_expectations(obs, means, n, tol=args.tol)
            source = "expectations"
    except gme.GmeSolverError as exc:
        dump = args.dump or "gme-failure.json"
        _dump_problem(exc, dump)
        print(f"solver failure: {exc}; problem dumped to {dump}", file=sys.stderr)
        return EXIT_SOLVER
    _emit(certificate_document(cert, source), args.out)
    print(f"{cert.verdict}: value {cert.value:.8g}, duality gap {cert.dual_gap:.3g}", file=sys.stderr)
    if not cert.optimality_certified:
        print(f"note: solver stopped early ({cert.solution.message}); the witness is valid but its value is only an upper bound", file=sys.stderr)
    return EXIT_GME if cert.verdict == gme.GME else EXIT_OK


def _dump_problem(exc: gme.GmeSolverError, path: str) -> None:
    body = {"message": str(exc)}
    if exc.problem is not None:
        pr = exc.problem
        body["problem"] = {
            "n_vars": pr.n_vars,
            "c": pr.c,
            "blocks": [{"name": b.name, "dim": b.dim} for b in pr.blocks],
        }
    if exc.solution is not None:
        body["solution"] = {"status": exc.solution.status, "message": exc.solution.message, "iterations": exc.solution.iterations}
    docs.write(path, docs.report_document("gme_failure", body))


# expfam


def cmd_expfam(args) -> int:
    rho = docs.state_from_document(docs.read(args.state, "state"))
    n = core.num_qubits(rho.shape[0])
    if not 1 <= args.k < n:
        print(f"error: --k must satisfy 1 <= k < {n}", file=sys.stderr)
        return EXIT_ERROR
    proj = expfam.info_projection(rho, args.k, args.tol, args.max_iter)
    dk = expfam.d_k(rho, args.k, args.tol, args.max_iter, require_convergence=False) if proj.converged else None
    body = {
        "k": args.k,
        "converged": proj.converged,
        "iterations": proj.iterations,
        "marginal_residual": proj.marginal_residual,
        "tol": args.tol,
        "message": proj.message,
        "coefficients": proj.hamiltonian.coefficients,
        "nu": proj.hamiltonian.nu,
        "d_k_bits": dk,
        "entropy_bits": core.vn_entropy(rho),
        "projection_entropy_bits": core.vn_entropy(proj.state),
        "projection": docs.encode_matrix(proj.state),
    }
    _emit(docs.report_document("info_projection", body), args.out)
    if not proj.converged:
        print(f"information projection did not converge: {proj.message} (residual {proj.marginal_residual:.3g})", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    print(f"D_{args.k} = {dk:.8g} bits", file=sys.stderr)
    return EXIT_OK


def cmd_r5_check(args) -> int:
    rho = docs.state_from_document(docs.read(args.state, "state"))
    target = expfam.ring_cluster_5_printed() if args.printed_frame else None
    res = expfam.thermal_exclusion_check(rho, target)
    body = {"fidelity": res.fidelity, "excluded": res.excluded, "threshold": res.threshold, "frame": "printed" if args.printed_frame else "stabilizer"}
    _emit(docs.report_document("r5_check", body), args.out)
    print(f"fidelity {res.fidelity:.8f}; excluded = {res.excluded}", file=sys.stderr)
    return EXIT_OK


# fixture helpers


def cmd_make_model(args) -> int:
    if args.type == "pauli":
        mdl = model.pauli_tomography_model(args.n)
        spec = {"type": "pauli", "n": args.n}
    else:
        axes = model.tilted_axes(args.tilt)
        mdl = model.qubit_axes_model(axes)
        spec = {"type": "axes", "axes": {k: list(map(float, v)) for k, v in axes.items()}}
    _emit(docs.model_document(mdl, spec), args.out)
    return EXIT_OK


def named_state(name: str, n: int, param: float | None):
    """Fixture states by name; returns a vector for pure states, a matrix otherwise."""
    if name == "ghz":
        return core.ghz_state(n)
    if name == "ghz-mixture":
        return tomo.ghz_mixture(n, 0.8 if param is None else param)
    if name == "mixed":
        return core.maximally_mixed(n)
    if name == "zero":
        return core.ket("0" * n)
    if name == "ring5":
        return expfam.ring_cluster_5()
    if name == "ring5-printed":
        return expfam.ring_cluster_5_printed()
    if name == "biseparable":
        singlet = (core.ket("01") - core.ket("10")) / np.sqrt(2)
        return core.tensor(singlet, core.ket("0" * (n - 2)))
    if name == "bloch":
        # near-pure qubit state in the x-z plane, used for the tilted-axes demo
        phi = np.deg2rad(52.5 if param is None else param)
        r = 0.98
        return (np.eye(2) + r * (np.cos(phi) * core.pauli_matrix("x") + np.sin(phi) * core.pauli_matrix("z"))) / 2
    raise ValueError(f"unknown state {name!r}")


STATE_NAMES = ("ghz", "ghz-mixture", "mixed", "zero", "ring5", "ring5-printed", "biseparable", "bloch")


def cmd_make_state(args) -> int:
    st = named_state(args.name, args.n, args.param)
    _emit(docs.state_document(st, args.name), args.out)
    return EXIT_OK


def cmd_sample(args) -> int:
    rho = docs.state_from_document(docs.read(args.state, "state"))
    mdl = docs.model_from_document(docs.read(args.model, "model"))
    if args.exact:
        probs = model.born_probabilities(rho, mdl)
        counts = {s: {r: int(round(p * args.shots)) for r, p in row.items()} for s, row in probs.items()}
        data = model.CountData(counts, None, "rounded exact probabilities")
    else:
        data = model.sample_counts(rho, mdl, args.shots, _seed(args))
    _emit(docs.counts_document(data), args.out)
    return EXIT_OK


def cmd_bias(args) -> int:
    rho = docs.state_from_document(docs.read(args.state, "state"))
    mdl = docs.model_from_document(docs.read(args.model, "model"))
    psi = docs.pure_state_from_document(docs.read(args.target_state, "state"))
    rep = tomo.bias_experiment(rho, mdl, args.shots, args.trials, psi, _seed(args), ml_tol=args.tol)
    if args.csv:
        rep.to_csv(args.csv)
    body = {
        "true_fidelity": rep.true_fidelity,
        "shots_per_setting": rep.shots_per_setting,
        "trials": rep.trials,
        "estimators": rep.estimators,
        "summary": rep.summary(),
        "histograms": {name: {"counts": h[0], "edges": h[1]} for name in rep.estimators for h in [rep.histogram(name)]},
    }
    _emit(docs.report_document("bias", body, _seed(args)), args.out)
    for name, s in rep.summary().items():
        print(f"{name}: mean fidelity {s['mean']:.5f} +- {s['stderr']:.5f}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qsa", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def out(p):
        p.add_argument("--out", "-o", help="output document path (default: stdout)")

    p = sub.add_parser("systest", help="split-data witness test for systematic errors")
    p.add_argument("model")
    p.add_argument("counts")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--kind", choices=systest.KINDS, default=systest.POSITIVITY)
    p.add_argument("--seed", type=lambda s: int(s, 0), help=f"split seed (default: ${SEED_ENV} or 0)")
    out(p)
    p.set_defaults(func=cmd_systest)

    p = sub.add_parser("tomo", help="state estimation")
    p.add_argument("model")
    p.add_argument("counts")
    p.add_argument("--estimator", choices=("lin", "ml"), default="lin")
    p.add_argument("--target-state", help="pure-state document for fidelity and its lower confidence bound")
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--tol", type=float, default=1e-8, help="ML stopping tolerance")
    out(p)
    p.set_defaults(func=cmd_tomo)

    p = sub.add_parser("gme", help="PPT-mixture witness program")
    p.add_argument("--state")
    p.add_argument("--expectations")
    p.add_argument("--tol", type=float, default=gme.SOLVER_TOL)
    p.add_argument("--verify", metavar="CERT", help="re-verify a certificate document instead of solving")
    p.add_argument("--verify-tol", type=float, default=1e-6)
    p.add_argument("--dump", help="where to write the problem dump on solver failure")
    out(p)
    p.set_defaults(func=cmd_gme)

    p = sub.add_parser("expfam", help="information projection and D_k")
    p.add_argument("state")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=5000)
    out(p)
    p.set_defaults(func=cmd_expfam)

    p = sub.add_parser("r5-check", help="ring-cluster fidelity and thermal-exclusion bound")
    p.add_argument("state")
    p.add_argument("--printed-frame", action="store_true", help="compare with the eight-term frame of the ring state")
    out(p)
    p.set_defaults(func=cmd_r5_check)

    p = sub.add_parser("make-model", help="write a measurement-model document")
    p.add_argument("type", choices=("pauli", "tilted"))
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--tilt", type=float, default=15.0, help="tilt of the x axis towards z, degrees")
    out(p)
    p.set_defaults(func=cmd_make_model)

    p = sub.add_parser("make-state", help="write a fixture state document")
    p.add_argument("name", choices=STATE_NAMES)
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--param", type=float)
    out(p)
    p.set_defaults(func=cmd_make_state)

    p = sub.add_parser("sample", help="simulate counts from a state and a model")
    p.add_argument("state")
    p.add_argument("model")
    p.add_argument("--shots", type=int, default=100)
    p.add_argument("--seed", type=lambda s: int(s, 0))
    p.add_argument("--exact", action="store_true", help="round exact probabilities instead of sampling")
    out(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("bias", help="Monte-Carlo bias experiment for ML and linear inversion")
    p.add_argument("state")
    p.add_argument("model")
    p.add_argument("--target-state", required=True)
    p.add_argument("--shots", type=int, default=100)
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--seed", type=lambda s: int(s, 0))
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--csv", help="write per-trial fidelities as CSV")
    out(p)
    p.set_defaults(func=cmd_bias)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors; 2 is reserved for a verdict here
        return EXIT_OK if exc.code in (0, None) else EXIT_ERROR
    try:
        return args.func(args)
    except (docs.DocumentError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
