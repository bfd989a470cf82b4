"""Sine-activation MLP kernel with exact closed-form derivatives.

All higher-level fields (scalar shape fields, latent decoders, tangential
displacement nets) are thin wrappers around :class:`SineMlp`.  The kernel
computes, in one batched pass over sample points:

  * value
  * jacobian w.r.t. the input coordinates
  * input hessian (per scalar output)
  * gradient w.r.t. the flattened parameters
  * mixed second derivatives  d^2 y / (d input, d params)

Derivatives are propagated layer by layer (sin has closed-form derivatives
of every order), so no autodiff framework is involved.  Everything runs in
float64; second and third order checks need it.

Conventions
-----------
Layer 1 sees the input coordinates scaled by ``omega0``; hidden layers are
plain ``sin``; the output layer is linear.  Parameters are flattened layer
by layer as ``W.ravel()`` (row-major) followed by the bias, which is the
stable order the checkpoint format relies on.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeMismatch

Array = np.ndarray


def _apply_left(W: Array, G: Array) -> Array:
    """einsum('ij,nj...->ni...') as one GEMM; G is (N, j, *tail)."""
    N = G.shape[0]
    tail = G.shape[2:]
    flat = np.moveaxis(G, 1, -1).reshape(-1, G.shape[1])
    out = flat @ W.T
    return np.moveaxis(out.reshape((N,) + tail + (W.shape[0],)), -1, 1)


def _pair_contract(A: Array, B: Array) -> Array:
    """einsum('ni d,nj d->ij') for 3d (or 'ni,nj->ij' for 2d) as one GEMM."""
    if A.ndim == 2:
        return A.T @ B
    i, j = A.shape[1], B.shape[1]
    Af = np.moveaxis(A, 1, 0).reshape(i, -1)
    Bf = np.moveaxis(B, 1, 0).reshape(j, -1)
    return Af @ Bf.T


def _as_batch(x: Array, n_in: int):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        if x.shape[0] != n_in:
            raise ShapeMismatch(f"expected input of length {n_in}, got {x.shape[0]}")
        return x[None, :], True
    if x.ndim != 2 or x.shape[1] != n_in:
        raise ShapeMismatch(f"expected (N, {n_in}) inputs, got {x.shape}")
    return x, False


class SineMlp:
    """Fully connected net ``widths[0] -> ... -> widths[-1]`` with sine hidden units.

    The parameter vector is authoritative; weight matrices are views into it,
    so two instances sharing nothing can still be compared parameter-wise.
    Instances are immutable by convention: use :meth:`with_params` to obtain
    an updated copy (copy-on-write snapshots).
    """

    def __init__(self, widths, omega0: float = 30.0, params: Array | None = None,
                 seed: int | None = 0, out_scale: float = 1.0):
        self.widths = tuple(int(w) for w in widths)
        if len(self.widths) < 2:
            raise ShapeMismatch("need at least input and output widths")
        self.omega0 = float(omega0)
        self.n_in = self.widths[0]
        self.n_out = self.widths[-1]
        self.n_layers = len(self.widths) - 1
        self._offsets = self._layout()
        if params is None:
            params = self._init_params(np.random.default_rng(seed), out_scale)
        params = np.ascontiguousarray(params, dtype=np.float64)
        if params.shape != (self.param_count,):
            raise ShapeMismatch(
                f"parameter vector must have length {self.param_count}, got {params.shape}")
        self.params = params
        self.params.flags.writeable = False

    # -- layout ------------------------------------------------------------

    def _layout(self):
        offsets = []
        o = 0
        for l in range(1, len(self.widths)):
            h, w = self.widths[l], self.widths[l - 1]
            offsets.append((o, o + h * w, o + h * w + h))
            o += h * w + h
        self._pcount = o
        return offsets

    @property
    def param_count(self) -> int:
        return self._pcount

    def layer(self, l: int, params: Array | None = None):
        """(W, b) views for linear layer ``l`` (0-based)."""
        theta = self.params if params is None else params
        o0, o1, o2 = self._offsets[l]
        h, w = self.widths[l + 1], self.widths[l]
        return theta[o0:o1].reshape(h, w), theta[o1:o2]

    def _init_params(self, rng, out_scale):
        theta = np.empty(self.param_count)
        for l in range(self.n_layers):
            fan_in = self.widths[l]
            o0, o1, o2 = self._offsets[l]
            if l == 0:
                bound = 1.0 / fan_in
            else:
                bound = np.sqrt(6.0 / fan_in)
            if l == self.n_layers - 1:
                bound *= out_scale
            theta[o0:o1] = rng.uniform(-bound, bound, o1 - o0)
            if l < self.n_layers - 1:
                # full phase diversity across sine units
                theta[o1:o2] = rng.uniform(-np.pi, np.pi, o2 - o1)
            else:
                bb = out_scale / np.sqrt(fan_in)
                theta[o1:o2] = rng.uniform(-bb, bb, o2 - o1)
        return theta

    def with_params(self, params: Array) -> "SineMlp":
        return SineMlp(self.widths, omega0=self.omega0, params=params)

    # -- forward passes ------------------------------------------------------

    def _forward(self, X: Array, keep: bool = False):
        """Plain forward.  With ``keep`` returns per-layer inputs and preactivations."""
        ins, zs = [], []
        a = self.omega0 * X
        for l in range(self.n_layers):
            W, b = self.layer(l)
            z = a @ W.T + b
            if keep:
                ins.append(a)
                zs.append(z)
            a = np.sin(z) if l < self.n_layers - 1 else z
        return (a, ins, zs) if keep else a

    def value(self, X: Array) -> Array:
        X, single = _as_batch(X, self.n_in)
        y = self._forward(X)
        return y[0] if single else y

    def query(self, X: Array, jac_x: bool = False, hess_x: bool = False,
              grad_params: bool = False, mixed: bool = False) -> dict:
        """Evaluate the requested derivative blocks at a batch of points.

        Returns a dict with keys among ``value (N,n_out)``, ``jac_x
        (N,n_out,n_in)``, ``hess_x (N,n_out,n_in,n_in)``, ``grad_params
        (N,n_out,P)`` and ``mixed (N,n_out,n_in,P)``.
        """
        X, _ = _as_batch(X, self.n_in)
        N = X.shape[0]
        need_G = jac_x or hess_x or mixed
        need_T = hess_x
        y, ins, zs = self._forward(X, keep=True)
        out = {"value": y}

        Gs, Pzs = [], []   # per hidden layer: dA/dx, dZ/dx
        T = None
        if need_G:
            G = None       # G_0 is the identity, handled implicitly
            for l in range(self.n_layers - 1):
                W, _ = self.layer(l)
                if l == 0:
                    Pz = np.broadcast_to(self.omega0 * W, (N,) + W.shape).copy()
                else:
                    Pz = _apply_left(W, G)
                cz = np.cos(zs[l])
                G = cz[:, :, None] * Pz
                Pzs.append(Pz)
                Gs.append(G)
            WL, _ = self.layer(self.n_layers - 1)
            if self.n_layers == 1:
                out_jac = np.broadcast_to(self.omega0 * WL, (N,) + WL.shape).copy()
            else:
                out_jac = _apply_left(WL, Gs[-1])
            if jac_x:
                out["jac_x"] = out_jac

        if need_T:
            T = None       # T_0 = 0
            for l in range(self.n_layers - 1):
                W, _ = self.layer(l)
                sz = np.sin(zs[l])
                cz = np.cos(zs[l])
                Pz = Pzs[l]
                outer = Pz[:, :, :, None] * Pz[:, :, None, :]
                if T is None:
                    Q = 0.0
                else:
                    Q = _apply_left(W, T)
                T = cz[:, :, None, None] * Q - sz[:, :, None, None] * outer
            WL, _ = self.layer(self.n_layers - 1)
            if T is None:
                out["hess_x"] = np.zeros((N, self.n_out, self.n_in, self.n_in))
            else:
                out["hess_x"] = _apply_left(WL, T)

        if grad_params or mixed:
            out.update(self._param_blocks(X, ins, zs, Gs, Pzs,
                                          want_grad=grad_params, want_mixed=mixed))
        return out

    def _param_blocks(self, X, ins, zs, Gs, Pzs, want_grad, want_mixed):
        """grad_params and mixed blocks, one backward chain per output unit."""
        N = X.shape[0]
        L = self.n_layers
        P = self.param_count
        n_out, n_in = self.n_out, self.n_in
        grad = np.empty((N, n_out, P)) if want_grad else None
        mix = np.zeros((N, n_out, n_in, P)) if want_mixed else None

        for o in range(n_out):
            # delta_l = dy_o/dZ_l, walked from the output layer down
            WL, _ = self.layer(L - 1)
            delta = np.broadcast_to(WL[o] * 1.0, (N, self.widths[L - 1]))
            Ddelta = None  # d delta / dx, zero at the top
            # output layer parameter slots
            if want_grad:
                o0, o1, o2 = self._offsets[L - 1]
                gW = np.zeros((N, self.widths[L], self.widths[L - 1]))
                gW[:, o, :] = ins[L - 1]
                grad[:, o, o0:o1] = gW.reshape(N, -1)
                gb = np.zeros((N, self.widths[L]))
                gb[:, o] = 1.0
                grad[:, o, o1:o2] = gb
            if want_mixed and L >= 2:
                o0, o1, o2 = self._offsets[L - 1]
                mW = np.zeros((N, self.widths[L], self.widths[L - 1], n_in))
                mW[:, o, :, :] = Gs[L - 2]
                mix[:, o, :, o0:o1] = mW.reshape(N, -1, n_in).transpose(0, 2, 1)
                # bias of the output layer has no x dependence
            for l in range(L - 2, -1, -1):
                cz = np.cos(zs[l])
                sz = np.sin(zs[l])
                d = delta * cz                      # dy/dZ_l
                if want_mixed:
                    if Ddelta is None:
                        Du = np.zeros((N, self.widths[l + 1], n_in))
                    else:
                        Wup, _ = self.layer(l + 1)
                        Du = _apply_left(Wup.T, Ddelta)
                    Dd = Du * cz[:, :, None] - (delta * sz)[:, :, None] * Pzs[l]
                o0, o1, o2 = self._offsets[l]
                if want_grad:
                    grad[:, o, o0:o1] = (d[:, :, None] * ins[l][:, None, :]).reshape(N, -1)
                    grad[:, o, o1:o2] = d
                if want_mixed:
                    if l == 0:
                        DIn = None  # d(omega0 x)/dx = omega0 I
                        mW = Dd[:, :, None, :] * ins[0][:, None, :, None]
                        eye = np.eye(n_in) * self.omega0
                        mW += d[:, :, None, None] * eye[None, None, :, :]
                    else:
                        DIn = Gs[l - 1]
                        mW = Dd[:, :, None, :] * ins[l][:, None, :, None] \
                            + d[:, :, None, None] * DIn[:, None, :, :]
                    mix[:, o, :, o0:o1] = mW.reshape(N, -1, n_in).transpose(0, 2, 1)
                    mix[:, o, :, o1:o2] = Dd.transpose(0, 2, 1)
                if l > 0:
                    W, _ = self.layer(l)
                    delta = d @ W
                    if want_mixed:
                        Ddelta = Dd
        out = {}
        if want_grad:
            out["grad_params"] = grad
        if want_mixed:
            out["mixed"] = mix
        return out

    # -- reverse mode --------------------------------------------------------

    def param_backward(self, X: Array, value_bar: Array | None = None,
                       jac_bar: Array | None = None, cache=None) -> Array:
        """Parameter gradient of ``sum_n <value_bar_n, y_n> + <jac_bar_n, J_n>``.

        ``value_bar``: (N, n_out) cotangent on the outputs (or None).
        ``jac_bar``:   (N, n_out, n_in) cotangent on the input jacobian (or None).
        Returns the flat (P,) gradient.  This is the workhorse behind SDF
        fitting losses and the rigidity-energy parameter gradients.
        ``cache``: a dict from :meth:`forward_cache` to reuse forward state.
        """
        X, _ = _as_batch(X, self.n_in)
        N = X.shape[0]
        L = self.n_layers
        want_jac = jac_bar is not None
        if cache is not None:
            y, ins, zs = cache["y"], cache["ins"], cache["zs"]
        else:
            y, ins, zs = self._forward(X, keep=True)
        Gs, Pzs = [], []
        if want_jac:
            if cache is not None and "Gs" in cache:
                Gs, Pzs = cache["Gs"], cache["Pzs"]
            else:
                G = None
                for l in range(L - 1):
                    W, _ = self.layer(l)
                    if l == 0:
                        Pz = np.broadcast_to(self.omega0 * W, (N,) + W.shape)
                    else:
                        Pz = _apply_left(W, G)
                    G = np.cos(zs[l])[:, :, None] * Pz
                    Pzs.append(Pz)
                    Gs.append(G)
            jac_bar = np.asarray(jac_bar, dtype=np.float64)
            if jac_bar.shape != (N, self.n_out, self.n_in):
                raise ShapeMismatch(f"jac_bar must be (N, {self.n_out}, {self.n_in})")
        if value_bar is not None:
            value_bar = np.asarray(value_bar, dtype=np.float64).reshape(N, self.n_out)

        gtheta = np.zeros(self.param_count)
        WL, bL = self.layer(L - 1)
        o0, o1, o2 = self._offsets[L - 1]
        a_bar = np.zeros((N, self.widths[L - 1]))
        G_bar = None
        gW = np.zeros_like(WL)
        if value_bar is not None:
            gW += _pair_contract(value_bar, ins[L - 1])
            gtheta[o1:o2] += value_bar.sum(axis=0)
            a_bar += value_bar @ WL
        if want_jac:
            if L >= 2:
                gW += _pair_contract(jac_bar, Gs[-1])
                G_bar = _apply_left(WL.T, jac_bar)
            else:
                gW += self.omega0 * jac_bar.sum(axis=0)
        gtheta[o0:o1] += gW.ravel()

        for l in range(L - 2, -1, -1):
            cz = np.cos(zs[l])
            sz = np.sin(zs[l])
            z_bar = a_bar * cz
            Pz_bar = None
            if G_bar is not None:
                Pz_bar = cz[:, :, None] * G_bar
                z_bar = z_bar - sz * (G_bar * Pzs[l]).sum(axis=2)
            o0, o1, o2 = self._offsets[l]
            W, _ = self.layer(l)
            gW = _pair_contract(z_bar, ins[l])
            if Pz_bar is not None:
                if l == 0:
                    gW += self.omega0 * Pz_bar.sum(axis=0)
                else:
                    gW += _pair_contract(Pz_bar, Gs[l - 1])
            gtheta[o0:o1] += gW.ravel()
            gtheta[o1:o2] += z_bar.sum(axis=0)
            if l > 0:
                a_bar = z_bar @ W
                if Pz_bar is not None:
                    G_bar = _apply_left(W.T, Pz_bar)
                else:
                    G_bar = None
        return gtheta

    def forward_cache(self, X: Array, with_jac: bool = False) -> dict:
        """Forward state reusable by :meth:`param_backward` within one step."""
        X, _ = _as_batch(X, self.n_in)
        N = X.shape[0]
        y, ins, zs = self._forward(X, keep=True)
        out = {"y": y, "ins": ins, "zs": zs}
        if with_jac:
            Gs, Pzs = [], []
            G = None
            for l in range(self.n_layers - 1):
                W, _ = self.layer(l)
                if l == 0:
                    Pz = np.broadcast_to(self.omega0 * W, (N,) + W.shape)
                else:
                    Pz = _apply_left(W, G)
                G = np.cos(zs[l])[:, :, None] * Pz
                Pzs.append(Pz)
                Gs.append(G)
            WL, _ = self.layer(self.n_layers - 1)
            out["Gs"], out["Pzs"] = Gs, Pzs
            out["jac"] = _apply_left(WL, Gs[-1]) if Gs else None
        return out

    # -- serialization helpers ------------------------------------------------

    def describe(self) -> dict:
        return {"widths": list(self.widths), "omega0": self.omega0}
