"""Dense semidefinite programming with primal/dual certificates.

Problems are stated in linear-matrix-inequality form over a real vector ``x``::

    minimize    c @ x + offset
    subject to  F0_b + sum_i x_i F_ib  >= 0      for every Hermitian block b
                h + G @ x                >= 0      (elementwise)
                A @ x                     = b
                lower <= x <= upper

The dual variables are a PSD matrix ``Z_b`` per block, a nonnegative vector
``z`` for the linear rows and a free vector ``nu`` for the equalities; the
dual objective ``-sum_b <F0_b, Z_b> - h @ z + b @ nu`` is a lower bound on the
primal value whenever the dual residual ``c - F*(Z) - G.T z - A.T nu`` is zero.

The solver is an infeasible-start primal-dual path-following method with
Nesterov-Todd scaling and a Mehrotra-type centering heuristic. Equalities are
eliminated before the iteration by a null-space parametrization.
"""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from . import core

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
NUMERICAL_FAILURE = "numerical_failure"

DEFAULT_TOL = 1e-7
MAX_ITER = 200
DENSE_SCHUR_LIMIT = 4096
MAX_BLOCK_DIM = 64


class SdpError(RuntimeError):
    """Raised for malformed problems; solver outcomes are reported via ``status``."""


@functools.lru_cache(maxsize=None)
def hermitian_basis_index(dim: int):
    """Orthonormal real basis of ``dim x dim`` Hermitian matrices.

    Returns ``(rows1, coef1, rows2, coef2)``: basis element ``a`` has entries
    ``coef1[a]`` at flat position ``rows1[a]`` and ``coef2[a]`` at ``rows2[a]``.
    Diagonal elements come first, then real and imaginary off-diagonal parts.
    """
    r1, c1, r2, c2 = [], [], [], []
    for k in range(dim):
        r1.append(k * dim + k)
        c1.append(1.0)
        r2.append(k * dim + k)
        c2.append(0.0)
    s = 1 / np.sqrt(2)
    for k in range(dim):
        for l in range(k + 1, dim):
            r1.append(k * dim + l)
            c1.append(s)
            r2.append(l * dim + k)
            c2.append(s)
            r1.append(k * dim + l)
            c1.append(1j * s)
            r2.append(l * dim + k)
            c2.append(-1j * s)
    out = (np.array(r1), np.array(c1, dtype=complex), np.array(r2), np.array(c2, dtype=complex))
    for a in out:
        a.setflags(write=False)
    return out


def hermitian_coordinates(h) -> np.ndarray:
    """Coordinates of a Hermitian matrix in the basis of :func:`hermitian_basis_index`."""
    h = np.asarray(h, dtype=complex)
    r1, c1, r2, c2 = hermitian_basis_index(h.shape[0])
    v = h.ravel()
    return np.real(c1.conj() * v[r1] + c2.conj() * v[r2])


def hermitian_from_coordinates(x, dim: int) -> np.ndarray:
    r1, c1, r2, c2 = hermitian_basis_index(dim)
    x = np.asarray(x, dtype=float)
    m = dim * dim
    a, b = c1 * x, c2 * x
    re = np.bincount(r1, a.real, m) + np.bincount(r2, b.real, m)
    im = np.bincount(r1, a.imag, m) + np.bincount(r2, b.imag, m)
    return (re + 1j * im).reshape(dim, dim)


class HermitianTerm:
    """``sign * T(H(x[offset:offset+dim**2]))``.

    ``H`` maps real coordinates to a Hermitian matrix (orthonormal basis) and
    ``T`` is the partial transpose over the qubits in ``transpose`` (identity
    when empty).
    """

    def __init__(self, offset: int, dim: int, transpose: Sequence[int] = (), sign: float = 1.0):
        self.offset = offset
        self.dim = dim
        self.size = dim * dim
        r1, c1, r2, c2 = hermitian_basis_index(dim)
        if len(transpose):
            p = core.partial_transpose_indices(core.num_qubits(dim), transpose)
            inv = np.empty_like(p)
            inv[p] = np.arange(p.size)
            r1, r2 = inv[r1], inv[r2]
        self.rows1, self.rows2 = r1, r2
        self.coef1, self.coef2 = sign * c1, sign * c2
        self.transpose = tuple(transpose)
        self.sign = sign

    @property
    def slice(self) -> slice:
        return slice(self.offset, self.offset + self.size)

    def apply(self, x) -> np.ndarray:
        v = np.zeros(self.size, dtype=complex)
        np.add.at(v, self.rows1, self.coef1 * x)
        np.add.at(v, self.rows2, self.coef2 * x)
        return v

    def adjoint(self, zvec) -> np.ndarray:
        return np.real(self.coef1.conj() * zvec[self.rows1] + self.coef2.conj() * zvec[self.rows2])

    def kv(self, k) -> np.ndarray:
        return k[:, self.rows1] * self.coef1 + k[:, self.rows2] * self.coef2

    def vh(self, y) -> np.ndarray:
        return self.coef1.conj()[:, None] * y[self.rows1] + self.coef2.conj()[:, None] * y[self.rows2]

    def dense(self) -> np.ndarray:
        out = np.zeros((self.size, self.size), dtype=complex)
        idx = np.arange(self.size)
        np.add.at(out, (idx, self.rows1), self.coef1)
        np.add.at(out, (idx, self.rows2), self.coef2)
        return out.reshape(self.size, self.dim, self.dim)


class DenseTerm:
    """``sum_i x[offset+i] * mats[i]`` for explicitly stored Hermitian matrices."""

    def __init__(self, offset: int, mats):
        mats = np.asarray(mats, dtype=complex)
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
            raise SdpError(f"dense term needs a (k, d, d) stack, got {mats.shape}")
        if mats.size and np.max(np.abs(mats - mats.conj().transpose(0, 2, 1))) > 1e-12:
            raise SdpError("dense term coefficients must be Hermitian")
        self.offset = offset
        self.size = mats.shape[0]
        self.dim = mats.shape[1]
        self._v = mats.reshape(self.size, -1).T.copy()

    @property
    def slice(self) -> slice:
        return slice(self.offset, self.offset + self.size)

    def apply(self, x) -> np.ndarray:
        return self._v @ x

    def adjoint(self, zvec) -> np.ndarray:
        return np.real(self._v.conj().T @ zvec)

    def kv(self, k) -> np.ndarray:
        return k @ self._v

    def vh(self, y) -> np.ndarray:
        return self._v.conj().T @ y

    def dense(self) -> np.ndarray:
        return self._v.T.reshape(self.size, self.dim, self.dim)


@dataclass
class PsdBlock:
    """One matrix inequality ``constant + sum(terms) >= 0``."""

    dim: int
    terms: list
    constant: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        if self.dim > MAX_BLOCK_DIM:
            raise SdpError(f"block {self.name!r} of dimension {self.dim} exceeds {MAX_BLOCK_DIM}")
        if self.constant is None:
            self.constant = np.zeros((self.dim, self.dim), dtype=complex)
        self.constant = np.asarray(self.constant, dtype=complex)
        if self.constant.shape != (self.dim, self.dim):
            raise SdpError(f"constant of block {self.name!r} has shape {self.constant.shape}")
        if np.max(np.abs(self.constant - self.constant.conj().T), initial=0) > 1e-12:
            raise SdpError(f"constant of block {self.name!r} is not Hermitian")
        for t in self.terms:
            if t.dim != self.dim:
                raise SdpError(f"term of dimension {t.dim} in block {self.name!r} of dimension {self.dim}")

    def value(self, x) -> np.ndarray:
        v = self.constant.ravel().copy()
        for t in self.terms:
            v += t.apply(x[t.slice])
        m = v.reshape(self.dim, self.dim)
        return (m + m.conj().T) / 2

    def linear(self, x) -> np.ndarray:
        v = np.zeros(self.dim * self.dim, dtype=complex)
        for t in self.terms:
            v += t.apply(x[t.slice])
        m = v.reshape(self.dim, self.dim)
        return (m + m.conj().T) / 2

    def adjoint_into(self, z, out) -> None:
        zv = np.asarray(z, dtype=complex).ravel()
        for t in self.terms:
            out[t.slice] += t.adjoint(zv)


@dataclass
class SdpProblem:
    n_vars: int
    c: np.ndarray
    blocks: list[PsdBlock] = field(default_factory=list)
    lin_h: np.ndarray | None = None
    lin_G: np.ndarray | None = None
    eq_A: np.ndarray | None = None
    eq_b: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    offset: float = 0.0

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        if self.c.size != self.n_vars:
            raise SdpError(f"objective has {self.c.size} entries for {self.n_vars} variables")
        for b in self.blocks:
            for t in b.terms:
                if t.offset < 0 or t.offset + t.size > self.n_vars:
                    raise SdpError(f"term in block {b.name!r} addresses variables beyond {self.n_vars}")
        if (self.lin_h is None) != (self.lin_G is None):
            raise SdpError("linear inequalities need both h and G")
        if self.lin_G is not None:
            self.lin_G = np.atleast_2d(np.asarray(self.lin_G, dtype=float))
            self.lin_h = np.asarray(self.lin_h, dtype=float).ravel()
            if self.lin_G.shape != (self.lin_h.size, self.n_vars):
                raise SdpError("linear inequality matrix has the wrong shape")
        if (self.eq_A is None) != (self.eq_b is None):
            raise SdpError("equalities need both A and b")
        if self.eq_A is not None:
            self.eq_A = np.atleast_2d(np.asarray(self.eq_A, dtype=float))
            self.eq_b = np.asarray(self.eq_b, dtype=float).ravel()
            if self.eq_A.shape != (self.eq_b.size, self.n_vars):
                raise SdpError("equality matrix has the wrong shape")
        for name in ("lower", "upper"):
            v = getattr(self, name)
            if v is not None:
                v = np.broadcast_to(np.asarray(v, dtype=float), (self.n_vars,)).copy()
                setattr(self, name, v)

    def objective(self, x) -> float:
        return float(self.c @ x + self.offset)

    def linear_rows(self):
        """All elementwise inequalities (explicit rows plus finite bounds) as ``(h, G)``."""
        hs, gs = [], []
        if self.lin_G is not None:
            hs.append(self.lin_h)
            gs.append(self.lin_G)
        eye = np.eye(self.n_vars)
        if self.lower is not None:
            fin = np.isfinite(self.lower)
            hs.append(-self.lower[fin])
            gs.append(eye[fin])
        if self.upper is not None:
            fin = np.isfinite(self.upper)
            hs.append(self.upper[fin])
            gs.append(-eye[fin])
        if not hs:
            return np.zeros(0), np.zeros((0, self.n_vars))
        return np.concatenate(hs), np.vstack(gs)


@dataclass
class SdpSolution:
    status: str
    primal_value: float
    dual_value: float
    x: np.ndarray
    block_values: list[np.ndarray]
    dual_blocks: list[np.ndarray]
    dual_linear: np.ndarray
    dual_eq: np.ndarray
    iterations: int
    message: str = ""
    certificate: str = ""

    @property
    def gap(self) -> float:
        return abs(self.primal_value - self.dual_value)

    @property
    def free_values(self) -> np.ndarray:
        return self.x


def _psd_sqrt_inv(m):
    w, v = np.linalg.eigh(m)
    w = np.maximum(w, 1e-300)
    return (v * np.sqrt(w)) @ v.conj().T, (v / np.sqrt(w)) @ v.conj().T


def _nt_scaling(s, z):
    """``W`` with ``W S W = Z`` (and the Cholesky factor of ``S``)."""
    ls = np.linalg.cholesky(s)
    lz = np.linalg.cholesky(z)
    u, d, vh = np.linalg.svd(ls.conj().T @ lz)
    g = lz @ vh.conj().T / np.sqrt(d)
    w = g @ g.conj().T
    return (w + w.conj().T) / 2, ls


def _max_step(l, dm):
    """Largest ``a`` with ``L L^H + a dM >= 0`` given the Cholesky factor ``L``."""
    y = sla.solve_triangular(l, dm, lower=True)
    y = sla.solve_triangular(l, y.conj().T, lower=True).conj().T
    lmin = np.linalg.eigvalsh((y + y.conj().T) / 2)[0]
    return np.inf if lmin >= 0 else -1.0 / lmin


def _max_step_vec(v, dv):
    neg = dv < 0
    return np.min(-v[neg] / dv[neg]) if np.any(neg) else np.inf


class _Reduced:
    """Equality-free, bound-free problem the interior-point loop works on."""

    def __init__(self, p: SdpProblem):
        self.orig = p
        h, g = p.linear_rows()
        if p.eq_A is not None and p.eq_A.shape[0]:
            a, b = p.eq_A, p.eq_b
            x0, *_ = np.linalg.lstsq(a, b, rcond=None)
            resid = np.max(np.abs(a @ x0 - b))
            if resid > 1e-9 * (1 + np.max(np.abs(b))):
                self.eq_infeasible = resid
            else:
                self.eq_infeasible = 0.0
            u, sv, vh = np.linalg.svd(a)
            rank = int(np.sum(sv > 1e-10 * max(1.0, sv[0] if sv.size else 1.0)))
            null = vh[rank:].T
            self.x0 = x0
            self.null = null
            blocks = []
            for blk in p.blocks:
                stack = np.zeros((p.n_vars, blk.dim, blk.dim), dtype=complex)
                for t in blk.terms:
                    stack[t.slice] += t.dense()
                const = blk.value(x0)
                new = np.einsum("ij,ikl->jkl", null, stack)
                blocks.append(PsdBlock(blk.dim, [DenseTerm(0, new)] if null.shape[1] else [], const, blk.name))
            self.blocks = blocks
            self.c = null.T @ p.c
            self.const = float(p.c @ x0)
            self.h = h + g @ x0
            self.G = g @ null
            self.m = null.shape[1]
        else:
            self.eq_infeasible = 0.0
            self.x0 = np.zeros(p.n_vars)
            self.null = None
            self.blocks = p.blocks
            self.c = p.c
            self.const = 0.0
            self.h = h
            self.G = g
            self.m = p.n_vars

    def lift(self, t):
        return t if self.null is None else self.x0 + self.null @ t


def _groups(red: _Reduced):
    """Partition of variables induced by the block terms, or ``None`` if terms overlap."""
    spans = sorted({(t.offset, t.size) for b in red.blocks for t in b.terms})
    covered = 0
    groups = []
    for off, size in spans:
        if off < covered:
            if groups and groups[-1] == (off, size):
                continue
            return None
        groups.append((off, size))
        covered = off + size
    if covered != red.m or sum(s for _, s in groups) != red.m:
        return None
    return groups


class _SchurSystem:
    def __init__(self, red: _Reduced):
        self.red = red
        self.m = red.m
        self.groups = None
        if self.m > DENSE_SCHUR_LIMIT:
            groups = _groups(red) if red.G.shape[0] == 0 else None
            if groups is None:
                raise SdpError(f"{self.m} variables without exploitable structure exceed the dense limit")
            self.groups = groups
            self.gindex = {off: i for i, (off, _) in enumerate(groups)}
            pairs = set()
            for b in red.blocks:
                gs = sorted({self.gindex[t.offset] for t in b.terms})
                for i in gs:
                    for j in gs:
                        if i < j:
                            pairs.add((i, j))
            hubs = None
            for i, j in pairs:
                hubs = {i, j} if hubs is None else hubs & {i, j}
            if not pairs:
                self.hub = None
            elif not hubs:
                raise SdpError("Schur complement is neither small enough nor star-structured")
            else:
                self.hub = min(hubs)

    def assemble(self, ws, wlin):
        red = self.red
        if self.groups is None:
            mat = np.zeros((self.m, self.m))
            for b, w in zip(red.blocks, ws):
                k = np.kron(w, w.T)
                kvs = [t.kv(k) for t in b.terms]
                for t1 in b.terms:
                    for t2, kv in zip(b.terms, kvs):
                        mat[t1.slice, t2.slice] += np.real(t1.vh(kv))
            if red.G.shape[0]:
                mat += red.G.T @ (wlin[:, None] * red.G)
            self.mat = (mat + mat.T) / 2
        else:
            blocks = {}
            for b, w in zip(red.blocks, ws):
                k = np.kron(w, w.T)
                kvs = [t.kv(k) for t in b.terms]
                for t1 in b.terms:
                    i = self.gindex[t1.offset]
                    for t2, kv in zip(b.terms, kvs):
                        j = self.gindex[t2.offset]
                        if i <= j:
                            blk = np.real(t1.vh(kv))
                            blocks[i, j] = blocks[i, j] + blk if (i, j) in blocks else blk
            self.blocks = blocks
        self._factor()

    def _factor(self):
        if self.groups is None:
            self.fact = _robust_factor(self.mat)
            return
        hub = self.hub
        n = len(self.groups)
        self.leaf = {}
        if hub is None:
            for i in range(n):
                self.leaf[i] = _robust_factor(self.blocks[i, i])
            return
        hh = self.blocks[hub, hub].copy()
        self.coupling = {}
        for i in range(n):
            if i == hub:
                continue
            f = _robust_factor(self.blocks[i, i])
            self.leaf[i] = f
            c = self.blocks.get((min(i, hub), max(i, hub)))
            if c is None:
                continue
            c_ih = c if i < hub else c.T  # rows of leaf i, columns of hub
            sol = _solve(f, c_ih)
            self.coupling[i] = (c_ih, sol)
            hh -= c_ih.T @ sol
        self.hub_fact = _robust_factor((hh + hh.T) / 2)

    def solve(self, rhs):
        if self.groups is None:
            return _solve(self.fact, rhs)
        out = np.empty_like(rhs)
        sl = [slice(o, o + s) for o, s in self.groups]
        if self.hub is None:
            for i, f in self.leaf.items():
                out[sl[i]] = _solve(f, rhs[sl[i]])
            return out
        r_hub = rhs[sl[self.hub]].copy()
        leaf_sol = {}
        for i, f in self.leaf.items():
            leaf_sol[i] = _solve(f, rhs[sl[i]])
            if i in self.coupling:
                r_hub -= self.coupling[i][0].T @ leaf_sol[i]
        x_hub = _solve(self.hub_fact, r_hub)
        out[sl[self.hub]] = x_hub
        for i in self.leaf:
            if i in self.coupling:
                out[sl[i]] = leaf_sol[i] - self.coupling[i][1] @ x_hub
            else:
                out[sl[i]] = leaf_sol[i]
        return out


def _robust_factor(mat):
    scale = max(np.max(np.abs(np.diag(mat))), 1e-300)
    for reg in (0.0, 1e-14, 1e-11, 1e-8):
        try:
            return ("chol", sla.cho_factor(mat + reg * scale * np.eye(mat.shape[0]), lower=True))
        except np.linalg.LinAlgError:
            continue
    return ("pinv", np.linalg.pinv(mat, rcond=1e-13))


def _solve(fact, rhs):
    kind, f = fact
    if kind == "chol":
        return sla.cho_solve(f, rhs)
    return f @ rhs


def _inner(a, b) -> float:
    return float(np.real(np.vdot(a, b)))


def solve(p: SdpProblem, tol: float = DEFAULT_TOL, max_iter: int = MAX_ITER) -> SdpSolution:
    """Solve ``p`` to absolute duality gap ``tol``.

    Returns an :class:`SdpSolution` whose ``status`` is ``optimal``,
    ``infeasible`` (with ``certificate`` naming the primal or dual side) or
    ``numerical_failure``.
    """
    red = _Reduced(p)
    if red.eq_infeasible:
        return _failure(p, red, INFEASIBLE, 0, f"equality constraints inconsistent (residual {red.eq_infeasible:.3g})", "equalities")
    if red.m == 0:
        return _solve_trivial(p, red, tol)
    schur = _SchurSystem(red)
    blocks = red.blocks
    nlin = red.G.shape[0]
    nu = sum(b.dim for b in blocks) + nlin

    scale = max(
        [1.0]
        + [np.max(np.abs(b.constant)) for b in blocks]
        + ([np.max(np.abs(red.h))] if nlin else [])
        + [np.max(np.abs(red.c), initial=0)]
    )
    xi = 10.0 * scale
    x = np.zeros(red.m)
    ss = [xi * np.eye(b.dim, dtype=complex) for b in blocks]
    zs = [xi * np.eye(b.dim, dtype=complex) for b in blocks]
    sl = np.full(nlin, xi)
    zl = np.full(nlin, xi)
    cnorm = 1 + np.max(np.abs(red.c), initial=0)

    status, msg, cert = NUMERICAL_FAILURE, "iteration limit reached", ""
    it = 0
    for it in range(1, max_iter + 1):
        rp = [b.value(x) - s for b, s in zip(blocks, ss)]
        rpl = red.h + red.G @ x - sl
        fstar = np.zeros(red.m)
        for b, z in zip(blocks, zs):
            b.adjoint_into(z, fstar)
        fstar += red.G.T @ zl
        rd = red.c - fstar
        pobj = float(red.c @ x) + red.const
        dobj = -sum(_inner(b.constant, z) for b, z in zip(blocks, zs)) - float(red.h @ zl) + red.const
        gap_c = sum(_inner(s, z) for s, z in zip(ss, zs)) + float(sl @ zl)
        mu = gap_c / nu
        pinf = max([np.max(np.abs(r)) for r in rp] + ([np.max(np.abs(rpl))] if nlin else [0.0]))
        dinf = np.max(np.abs(rd), initial=0)
        log.debug("it %3d pobj %.10g dobj %.10g gap %.3g pinf %.3g dinf %.3g", it, pobj, dobj, gap_c, pinf, dinf)

        if pinf <= tol and dinf <= tol and abs(pobj - dobj) <= tol and pobj - dobj >= -1e-12 and gap_c <= tol:
            status, msg = OPTIMAL, "converged"
            break

        # divergence checks: normalized iterates approaching an infeasibility certificate
        if dobj - red.const > 1e6 * cnorm * max(1.0, scale):
            t = dobj - red.const
            if dinf / t <= tol or np.max(np.abs(fstar)) / t <= 10 * tol:
                status, msg, cert = INFEASIBLE, "primal infeasible: dual ray found", "primal"
                break
        if -(pobj - red.const) > 1e6 * scale * cnorm:
            t = -(pobj - red.const)
            lin_ok = all(np.linalg.eigvalsh(b.linear(x))[0] / t >= -10 * tol for b in blocks)
            if lin_ok and (not nlin or np.min(red.G @ x) / t >= -10 * tol):
                status, msg, cert = INFEASIBLE, "dual infeasible: objective unbounded below", "dual"
                break

        try:
            ws = []
            ls = []
            for s, z in zip(ss, zs):
                w, l = _nt_scaling(s, z)
                ws.append(w)
                ls.append(l)
            wl = zl / sl
            schur.assemble(ws, wl)
        except (np.linalg.LinAlgError, ValueError) as exc:
            msg = f"scaling failed: {exc}"
            break

        sinv = [sla.cho_solve((l, True), np.eye(l.shape[0])) for l in ls]

        def direction(sigma):
            rcs = [sigma * mu * si - z for si, z in zip(sinv, zs)]
            rcl = sigma * mu / sl - zl
            rhs = -rd
            rhs = rhs.copy()
            for b, w, rc, r in zip(blocks, ws, rcs, rp):
                b.adjoint_into(rc - w @ r @ w, rhs)
            rhs += red.G.T @ (rcl - wl * rpl)
            dx = schur.solve(rhs)
            dss, dzs = [], []
            for b, w, rc, r in zip(blocks, ws, rcs, rp):
                ds = b.linear(dx) + r
                dz = rc - w @ ds @ w
                dss.append((ds + ds.conj().T) / 2)
                dzs.append((dz + dz.conj().T) / 2)
            dsl = red.G @ dx + rpl
            dzl = rcl - wl * dsl
            return dx, dss, dzs, dsl, dzl

        def steps(dss, dzs, dsl, dzl):
            ap = min([_max_step(l, ds) for l, ds in zip(ls, dss)] + [_max_step_vec(sl, dsl)] + [np.inf])
            lz = [np.linalg.cholesky(z) for z in zs]
            ad = min([_max_step(l, dz) for l, dz in zip(lz, dzs)] + [_max_step_vec(zl, dzl)] + [np.inf])
            return ap, ad

        try:
            dx, dss, dzs, dsl, dzl = direction(0.0)
            ap, ad = steps(dss, dzs, dsl, dzl)
            ap1, ad1 = min(1.0, ap), min(1.0, ad)
            mu_aff = (
                sum(_inner(s + ap1 * ds, z + ad1 * dz) for s, ds, z, dz in zip(ss, dss, zs, dzs))
                + float((sl + ap1 * dsl) @ (zl + ad1 * dzl))
            ) / nu
            sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3)) if mu > 0 else 0.0
            dx, dss, dzs, dsl, dzl = direction(sigma)
            ap, ad = steps(dss, dzs, dsl, dzl)
        except (np.linalg.LinAlgError, ValueError) as exc:
            msg = f"direction failed: {exc}"
            break
        gamma = 0.9 if it < 5 else 0.98
        ap = min(1.0, gamma * ap)
        ad = min(1.0, gamma * ad)
        if ap < 1e-12 and ad < 1e-12:
            msg = "step length collapsed"
            break
        x = x + ap * dx
        ss = [s + ap * ds for s, ds in zip(ss, dss)]
        sl = sl + ap * dsl
        zs = [z + ad * dz for z, dz in zip(zs, dzs)]
        zl = zl + ad * dzl

    return _package(p, red, status, it, msg, cert, x, zs, zl)


def _dual_eq(p: SdpProblem, red: _Reduced, zs, zl_full):
    if p.eq_A is None or not p.eq_A.shape[0]:
        return np.zeros(0)
    fstar = np.zeros(p.n_vars)
    for b, z in zip(p.blocks, zs):
        b.adjoint_into(z, fstar)
    h, g = p.linear_rows()
    if g.shape[0]:
        fstar += g.T @ zl_full
    nu, *_ = np.linalg.lstsq(p.eq_A.T, p.c - fstar, rcond=None)
    return nu


def _package(p, red, status, it, msg, cert, t, zs, zl):
    x = red.lift(t)
    block_values = [b.value(x) for b in p.blocks]
    dual_blocks = [(z + z.conj().T) / 2 for z in zs]
    nu = _dual_eq(p, red, dual_blocks, zl)
    primal = p.objective(x)
    if status == OPTIMAL:
        dual = _dual_value(p, dual_blocks, zl, nu)
    elif status == INFEASIBLE and cert == "primal":
        primal, dual = np.inf, np.inf
    elif status == INFEASIBLE and cert == "dual":
        primal, dual = -np.inf, -np.inf
    else:
        dual = -np.inf
    return SdpSolution(status, primal, dual, x, block_values, dual_blocks, zl, nu, it, msg, cert)


def _dual_value(p: SdpProblem, zs, zl, nu) -> float:
    h, _ = p.linear_rows()
    val = -sum(_inner(b.constant, z) for b, z in zip(p.blocks, zs)) + p.offset
    if h.size:
        val -= float(h @ zl)
    if nu.size:
        val += float(p.eq_b @ nu)
    return val


def _solve_trivial(p, red, tol):
    x = red.lift(np.zeros(0))
    ok = all(np.linalg.eigvalsh(b.value(x))[0] >= -tol for b in p.blocks)
    h, g = p.linear_rows()
    ok = ok and (not h.size or np.min(h + g @ x) >= -tol)
    if not ok:
        return _failure(p, red, INFEASIBLE, 0, "the unique point allowed by the equalities violates an inequality", "primal")
    zs = [np.zeros((b.dim, b.dim), dtype=complex) for b in p.blocks]
    zl = np.zeros(h.size)
    nu = _dual_eq(p, red, zs, zl)
    return SdpSolution(OPTIMAL, p.objective(x), _dual_value(p, zs, zl, nu), x, [b.value(x) for b in p.blocks], zs, zl, nu, 0, "fixed by equalities")


def _failure(p, red, status, it, msg, cert):
    x = red.lift(np.zeros(red.m)) if red.null is not None else np.zeros(p.n_vars)
    zs = [np.zeros((b.dim, b.dim), dtype=complex) for b in p.blocks]
    h, _ = p.linear_rows()
    primal, dual = (np.inf, np.inf) if cert in ("primal", "equalities") else (np.nan, -np.inf)
    return SdpSolution(status, primal, dual, x, [b.value(x) for b in p.blocks], zs, np.zeros(h.size), np.zeros(0), it, msg, cert)


def verify_certificate(p: SdpProblem, s: SdpSolution, tol: float = DEFAULT_TOL) -> bool:
    """Re-check an optimal solution by direct evaluation.

    Feasibility of both sides and the duality gap are recomputed from the
    problem data and the reported primal/dual variables only.
    """
    if s.status != OPTIMAL:
        return False
    slack = 10 * tol
    x = np.asarray(s.x, dtype=float)
    for b, z in zip(p.blocks, s.dual_blocks):
        if np.linalg.eigvalsh(b.value(x))[0] < -slack:
            return False
        if np.max(np.abs(z - z.conj().T), initial=0) > slack or np.linalg.eigvalsh((z + z.conj().T) / 2)[0] < -slack:
            return False
    h, g = p.linear_rows()
    if h.size:
        if np.min(h + g @ x) < -slack or np.min(s.dual_linear, initial=0) < -slack:
            return False
    if p.eq_A is not None and p.eq_A.shape[0]:
        if np.max(np.abs(p.eq_A @ x - p.eq_b)) > slack:
            return False
    resid = p.c.copy()
    for b, z in zip(p.blocks, s.dual_blocks):
        fz = np.zeros(p.n_vars)
        b.adjoint_into(z, fz)
        resid -= fz
    if h.size:
        resid -= g.T @ s.dual_linear
    if s.dual_eq.size:
        resid -= p.eq_A.T @ s.dual_eq
    if np.max(np.abs(resid), initial=0) > slack:
        return False
    primal = p.objective(x)
    dual = _dual_value(p, s.dual_blocks, s.dual_linear, s.dual_eq)
    return abs(primal - dual) <= tol and abs(primal - s.primal_value) <= tol and abs(dual - s.dual_value) <= tol


def max_eigenvalue_problem(a) -> SdpProblem:
    """``minimize t  s.t.  t*I - a >= 0``; the optimum is the largest eigenvalue of ``a``."""
    a = np.asarray(a, dtype=complex)
    a = (a + a.conj().T) / 2
    d = a.shape[0]
    block = PsdBlock(d, [DenseTerm(0, np.eye(d)[None])], -a, "t*I - A")
    return SdpProblem(1, np.array([1.0]), [block])
