"""Rational approximation machinery for Laplace-domain pole extraction.

Two layers:

* :func:`aaa` - greedy barycentric rational approximation of scalar samples,
  used to seed pole locations;
* :class:`SectorPoleFit` - variable-projection Gauss-Newton fit of the
  channel-shared model

      F_ch(s) = sum_k r_ch,k / (mu_k + i s^alpha) + background + c_ch

  over real pole parameters mu_k > 0 (log-parametrized) and, optionally,
  the exponent alpha. Residues are real-constrained linear unknowns solved
  by least squares at every step (the eigenfunction basis is real, so the
  residue matrices of the transfer operator are real).

The model is fitted on samples with Re s > 0 (the honestly reachable
region); evaluating the fitted pole sum elsewhere is the numerical
realization of the analytic continuation the uniqueness argument invokes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eig

__all__ = ["PoleModel", "SectorPoleFit", "aaa", "extract_pole_model"]


def aaa(F, Z, tol: float, mmax: int = 120):
    """Greedy AAA rational fit; returns (poles, residues, max_errors)."""
    Z = np.asarray(Z, dtype=complex).ravel()
    F = np.asarray(F, dtype=complex).ravel()
    M = len(Z)
    mask = np.ones(M, bool)
    R = np.full(M, F.mean(), dtype=complex)
    zt, ft = [], []
    w = None
    errs = []
    for _ in range(min(mmax, M // 2 - 1)):
        j = int(np.argmax(np.where(mask, np.abs(F - R), -1.0)))
        zt.append(Z[j])
        ft.append(F[j])
        mask[j] = False
        zt_a = np.array(zt)
        ft_a = np.array(ft)
        C = 1.0 / (Z[mask, None] - zt_a[None, :])
        A = F[mask, None] * C - C * ft_a[None, :]
        _, _, Vh = np.linalg.svd(A, full_matrices=False)
        w = Vh[-1].conj()
        R = F.copy()
        R[mask] = (C @ (w * ft_a)) / (C @ w)
        errs.append(float(np.max(np.abs(F - R))))
        if errs[-1] < tol:
            break
    m = len(zt)
    zt_a = np.array(zt)
    ft_a = np.array(ft)
    B = np.eye(m + 1, dtype=complex)
    B[0, 0] = 0.0
    E = np.zeros((m + 1, m + 1), dtype=complex)
    E[0, 1:] = w
    E[1:, 0] = 1.0
    E[1:, 1:] = np.diag(zt_a)
    ev = eig(E, B, right=False)
    pol = ev[np.isfinite(ev)]
    C = 1.0 / (pol[:, None] - zt_a[None, :])
    res = (C @ (w * ft_a)) / (-(C**2) @ w)
    return pol, res, errs


@dataclass
class PoleModel:
    """Fitted pole sum with channel-space residues.

    eval(z) returns the continuation sum_k residues[k]/(mu_k + i z) plus the
    background terms; valid anywhere off the poles.
    """

    mu: np.ndarray               # (m,)
    residues: np.ndarray         # (m, nch) real
    alpha: float
    bg_mu: np.ndarray = field(default_factory=lambda: np.zeros(0))
    bg_residues: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    const: np.ndarray = field(default_factory=lambda: np.zeros(0))
    mu_sigma: np.ndarray | None = None
    alpha_sigma: float | None = None
    fit_residual: float = np.nan
    noise_floor: float = np.nan

    @property
    def order(self) -> int:
        return len(self.mu)

    def eval(self, z) -> np.ndarray:
        """Channel values of the continuation at complex z; (nz, nch)."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        out = (1.0 / (self.mu[None, :] + 1j * z[:, None])) @ self.residues
        if self.bg_mu.size:
            out = out + (1.0 / (self.bg_mu[None, :] + 1j * z[:, None])) @ self.bg_residues
        if self.const.size:
            out = out + self.const[None, :]
        return np.asarray(out, dtype=complex)


class SectorPoleFit:
    """Joint fit of shared poles (and optionally alpha) across channels.

    Parameters: s (nz,) complex with Re s > 0; F (nch, nz) samples.
    Channels are normalized internally by their rms; residues are
    un-normalized on output.
    """

    def __init__(self, s, F, mu_bg=(), fit_alpha: bool = True,
                 zero_pole: bool = False):
        self.s = np.asarray(s, dtype=complex).ravel()
        F = np.asarray(F, dtype=complex)
        self.scale = np.sqrt(np.mean(np.abs(F) ** 2, axis=1)) + 1e-300
        self.Fw = (F / self.scale[:, None]).T.copy()     # (nz, nch)
        mu_bg = np.asarray(mu_bg, dtype=float)
        if zero_pole:
            # sources with nonzero mean excite the constant mode: a fixed
            # pole at mu = 0 carried as a background column
            mu_bg = np.concatenate([[0.0], mu_bg])
        self.mu_bg = mu_bg
        self.fit_alpha = fit_alpha
        self.log_s = np.log(self.s)

    # -- linear subproblem -------------------------------------------------
    def _design(self, mu, alpha):
        za = self.s ** alpha
        full = np.concatenate([mu, self.mu_bg])
        C = 1.0 / (full[None, :] + 1j * za[:, None])
        C = np.concatenate([C, np.ones((len(self.s), 1), dtype=complex)], axis=1)
        return C, za

    def _solve(self, nu, alpha):
        mu = np.exp(nu)
        C, za = self._design(mu, alpha)
        A = np.vstack([C.real, C.imag])
        Q, R = np.linalg.qr(A)
        b = np.vstack([self.Fw.real, self.Fw.imag])
        r = np.linalg.solve(R, Q.T @ b)
        resid = self.Fw - C @ r
        return mu, za, C, Q, r, resid

    def _project_out(self, Q, cols):
        """Remove the range(C) component of complex columns (stacked-real
        geometry): the Kaufman variable-projection Jacobian correction."""
        nz = len(self.s)
        stacked = np.vstack([cols.real, cols.imag])
        stacked = stacked - Q @ (Q.T @ stacked)
        return stacked[:nz] + 1j * stacked[nz:]

    # -- Gauss-Newton on log mu at fixed alpha -------------------------------
    def fit(self, mu0, alpha: float, n_iter: int = 50, step_tol: float = 1e-12):
        nu = np.log(np.sort(np.asarray(mu0, dtype=float)))
        alpha = float(alpha)
        m = len(nu)
        mu, za, C, Q, r, resid = self._solve(nu, alpha)
        cost = float(np.linalg.norm(resid) ** 2)
        damp = 1e-9
        for _ in range(n_iter):
            rp = r[:m]
            dC = -1.0 / (mu[None, :] + 1j * za[:, None]) ** 2
            dCp = self._project_out(Q, dC)
            G = dCp.conj().T @ dCp
            S = (rp @ rp.T).real
            mus = mu[:, None] * mu[None, :]
            JtJ = mus * G.real * S
            V = resid @ rp.T
            JtR = mu * np.real(np.sum(dCp.conj() * V, axis=0))
            ok = False
            step = np.zeros(m)
            for _ in range(14):
                Mreg = JtJ + damp * np.diag(np.diag(JtJ) + 1e-30)
                try:
                    step = np.linalg.solve(Mreg, JtR)
                except np.linalg.LinAlgError:
                    damp *= 10.0
                    continue
                big = float(np.max(np.abs(step)))
                if not np.isfinite(big):
                    damp *= 10.0
                    continue
                if big > 0.5:
                    step = step * (0.5 / big)  # trust region in log mu
                try:
                    mu2, za2, C2, Q2, r2, resid2 = self._solve(nu + step, alpha)
                except np.linalg.LinAlgError:
                    damp *= 10.0
                    continue
                cost2 = float(np.linalg.norm(resid2) ** 2)
                if cost2 < cost:
                    nu = nu + step
                    mu, za, C, Q, r, resid, cost = mu2, za2, C2, Q2, r2, resid2, cost2
                    damp = max(damp / 3.0, 1e-12)
                    ok = True
                    break
                damp *= 8.0
            if not ok or np.linalg.norm(step) < step_tol:
                break
        return _FitState(self, nu, alpha, mu, r, resid, cost,
                         self._full_jtj(mu, alpha, za, Q, r))

    def _full_jtj(self, mu, alpha, za, Q, r):
        """Normal-equation matrix over (log mu_1..m, alpha) at the optimum,
        for first-order error bars (alpha column included even though the
        optimization treats alpha in an outer 1-d loop)."""
        m = len(mu)
        rp = r[:m]
        full = np.concatenate([mu, self.mu_bg])
        P2 = 1.0 / (full[None, :] + 1j * za[:, None]) ** 2
        dCp = self._project_out(Q, -P2[:, :m])
        G = dCp.conj().T @ dCp
        S = (rp @ rp.T).real
        mus = mu[:, None] * mu[None, :]
        JtJ = np.zeros((m + 1, m + 1))
        JtJ[:m, :m] = mus * G.real * S
        zfac = -1j * za * self.log_s
        Ja = (P2 @ r[: m + len(self.mu_bg)]) * zfac[:, None]
        Jap = self._project_out(Q, Ja)
        JtJ[:m, m] = JtJ[m, :m] = mu * np.real(np.sum(dCp.conj() * (Jap @ rp.T), axis=0))
        JtJ[m, m] = float(np.sum(np.abs(Jap) ** 2))
        return JtJ


@dataclass
class _FitState:
    fitter: SectorPoleFit
    nu: np.ndarray
    alpha: float
    mu: np.ndarray
    r: np.ndarray
    resid: np.ndarray
    cost: float
    JtJ: np.ndarray | None

    @property
    def order(self) -> int:
        return len(self.nu)

    def residue_norms(self) -> np.ndarray:
        return np.linalg.norm(self.r[: self.order], axis=1)

    def residual_rms(self) -> float:
        return float(np.linalg.norm(self.resid) / np.sqrt(self.resid.size))

    def to_model(self) -> PoleModel:
        m = len(self.mu)
        nbg = len(self.fitter.mu_bg)
        scale = self.fitter.scale
        res = self.r[:m] * scale[None, :]
        bg = self.r[m : m + nbg] * scale[None, :]
        const = self.r[m + nbg] * scale
        mu_sig = None
        a_sig = None
        if self.JtJ is not None:
            noise = self.residual_rms()
            try:
                cov = np.linalg.pinv(self.JtJ) * noise**2 * self.resid.size
                dnu = np.sqrt(np.maximum(np.diag(cov)[:m], 0.0))
                mu_sig = self.mu * dnu
                a_sig = float(np.sqrt(max(cov[m, m], 0.0))) if self.fitter.fit_alpha else None
            except np.linalg.LinAlgError:
                pass
        order = np.argsort(self.mu)
        return PoleModel(
            mu=self.mu[order],
            residues=res[order],
            alpha=self.alpha,
            bg_mu=self.fitter.mu_bg.copy(),
            bg_residues=bg,
            const=const,
            mu_sigma=None if mu_sig is None else mu_sig[order],
            alpha_sigma=a_sig,
            fit_residual=self.residual_rms(),
        )


def _cluster(values, log_tol: float):
    """Geometric-mean clustering of sorted positive values by log gap."""
    values = np.sort(np.asarray(values, dtype=float))
    if values.size == 0:
        return values
    out = []
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and np.log(values[j + 1] / values[j]) < log_tol:
            j += 1
        out.append(float(np.exp(np.mean(np.log(values[i : j + 1])))))
        i = j + 1
    return np.array(out)


def extract_pole_model(s, F, alpha0: float, window, *, fit_alpha: bool = True,
                       alpha_scan_width: float = 0.02,
                       noise_tol: float = 1e-8, n_scalarizations: int = 4,
                       aaa_mmax: int = 120, merge_log_tol: float = 2e-3,
                       prune_rel: float = 3e-4, max_rounds: int = 5,
                       n_background: int = 5, zero_pole: bool = True,
                       seed: int = 0) -> PoleModel:
    """Order-controlled pole extraction on the window (mu_lo, mu_hi).

    Pole candidates are pooled from AAA runs on random channel
    scalarizations (in the z = s^alpha0 variable) and refined by the
    shared-pole sector fit with pruning of insignificant residues and
    merging of sub-resolution duplicates. The exponent itself is refined in
    an outer 1-d loop (parabolic descent on the fit residual), warm-starting
    the poles with the exact reparametrization mu -> mu^(alpha_new/alpha_old)
    induced by holding the s-plane pole fixed.
    """
    s = np.asarray(s, dtype=complex).ravel()
    F = np.asarray(F, dtype=complex)
    rng = np.random.default_rng(seed)
    mu_lo, mu_hi = window
    z0 = s ** alpha0
    max_init = 40

    def seed_candidates(tol):
        pool = []
        for _ in range(n_scalarizations):
            v = rng.standard_normal(F.shape[0])
            fz = (v @ F) / np.linalg.norm(v)
            pol, _res, _errs = aaa(fz, z0, tol=tol * float(np.max(np.abs(fz))),
                                   mmax=aaa_mmax)
            keep = (pol.imag > 0) & (np.abs(pol.real) < 0.5 * pol.imag)
            pool.append(pol[keep].imag)
        cand = np.concatenate(pool) if pool else np.array([])
        cand = cand[(cand > mu_lo) & (cand < mu_hi)]
        if cand.size == 0:
            return cand
        # escalate the clustering scale until the init stays modest:
        # near-duplicate Cauchy columns blow up the linear stage otherwise
        tol_c = max(merge_log_tol, 5e-3)
        mu0 = _cluster(cand, tol_c)
        while len(mu0) > max_init:
            tol_c *= 1.6
            mu0 = _cluster(cand, tol_c)
        return mu0

    mu_init = seed_candidates(noise_tol)
    if mu_init.size == 0:
        raise ValueError("no pole candidates found in the window")
    mu_bg = np.geomspace(mu_hi * 1.1, mu_hi * 4.0, n_background)
    fitter = SectorPoleFit(s, F, mu_bg=mu_bg, fit_alpha=fit_alpha,
                           zero_pole=zero_pole)

    # calibrate the seeding tolerance to the actual misfit floor
    probe = fitter.fit(mu_init, alpha0, n_iter=15)
    floor = probe.residual_rms()
    if floor < noise_tol / 30.0:
        fresh = seed_candidates(max(20.0 * floor, 1e-14))
        if fresh.size:
            mu_init = fresh


    def converge_order(mu_start, alpha):
        st = fitter.fit(mu_start, alpha)
        for _ in range(max_rounds):
            rn = st.residue_norms()
            keep = (rn > prune_rel * rn.max()) & (st.mu > mu_lo) & (st.mu < mu_hi)
            mu_new = _cluster(st.mu[keep], merge_log_tol)
            if mu_new.size == 0:
                break
            if len(mu_new) == len(st.mu) and np.allclose(
                np.sort(mu_new), np.sort(st.mu), rtol=1e-12
            ):
                break
            st = fitter.fit(mu_new, alpha)
        return st

    def grow(st, alpha):
        """Re-insert poles where the residual still has rational structure
        (pruning can drop a true pole with no way back otherwise)."""
        for _ in range(3):
            _, _, Vh = np.linalg.svd(st.resid, full_matrices=False)
            fresh = []
            for v in Vh[:2].conj():
                fz = st.resid @ v
                pol, _res, _errs = aaa(fz, s ** alpha,
                                       tol=1e-3 * float(np.max(np.abs(fz))),
                                       mmax=24)
                keep = (pol.imag > 0) & (np.abs(pol.real) < 0.5 * pol.imag)
                fresh.append(pol[keep].imag)
            fresh = np.concatenate(fresh) if fresh else np.array([])
            fresh = fresh[(fresh > mu_lo) & (fresh < mu_hi)]
            fresh = np.array([
                f for f in fresh
                if st.mu.size == 0 or np.min(np.abs(np.log(f / st.mu))) > merge_log_tol
            ])
            if fresh.size == 0:
                break
            st2 = converge_order(np.sort(np.concatenate([st.mu, _cluster(fresh, 5e-3)])), alpha)
            if st2.cost < 0.5 * st.cost:
                st = st2
            else:
                break
        return st

    def score(st):
        # cost with a gentle order penalty: breaks ties in favor of compact
        # models (a shattered wrong-exponent fit needs many extra poles)
        return st.cost * (1.0 + 0.02 * st.order)

    if fit_alpha and alpha_scan_width > 0:
        # coarse exponent scan: the converged misfit at the true exponent sits
        # at the noise floor, orders of magnitude below neighbors, so a full
        # order-controlled fit per grid point is an unambiguous locator
        # (candidates found in z = s^alpha0 transform exactly as mu^(a/alpha0))
        a_grid = np.linspace(alpha0 - alpha_scan_width, alpha0 + alpha_scan_width, 9)
        a_grid = a_grid[(a_grid > 0.05) & (a_grid < 0.999)]
        states = [converge_order(mu_init ** (a / alpha0), a) for a in a_grid]
        top = np.argsort([score(st) for st in states])[:3]
        grown = [grow(states[k], float(a_grid[k])) for k in top]
        state = min(grown, key=score)
    else:
        state = grow(converge_order(mu_init, alpha0), alpha0)

    if fit_alpha:
        def refit_at(alpha_new, base):
            # exact warm start: the s-plane pole is alpha-invariant, so
            # mu -> mu^(alpha_new/alpha_old)
            mu_ws = base.mu ** (alpha_new / base.alpha)
            return fitter.fit(mu_ws, alpha_new, n_iter=30)

        width = alpha_scan_width
        for _cycle in range(2):
            a_lo = max(0.05, state.alpha - width)
            a_hi = min(0.999, state.alpha + width)
            gr = (np.sqrt(5.0) - 1.0) / 2.0
            cache = {state.alpha: state}

            def g(a):
                if a not in cache:
                    cache[a] = refit_at(a, min(cache.values(), key=score))
                return np.log(cache[a].cost + 1e-300)

            x1 = a_hi - gr * (a_hi - a_lo)
            x2 = a_lo + gr * (a_hi - a_lo)
            f1, f2 = g(x1), g(x2)
            for _ in range(14):
                if f1 < f2:
                    a_hi, x2, f2 = x2, x1, f1
                    x1 = a_hi - gr * (a_hi - a_lo)
                    f1 = g(x1)
                else:
                    a_lo, x1, f1 = x1, x2, f2
                    x2 = a_lo + gr * (a_hi - a_lo)
                    f2 = g(x2)
                if a_hi - a_lo < 2e-5:
                    break
            best = min(cache.values(), key=score)
            state = grow(converge_order(best.mu, best.alpha), best.alpha)
            width = max(8.0 * (a_hi - a_lo), 1e-4)

    model = state.to_model()
    model.noise_floor = state.residual_rms()
    return model
