"""Neural signed-distance field: forward jets, parameter gradients, Adam.

The field f(x) is a softplus MLP from R^3 to R.  Everything downstream
(curvature energies, surface sampling, projection) consumes the second-order
jet of f at a point: the value, the spatial gradient and the spatial Hessian.
Jets are propagated analytically layer by layer; the Hessian is exact up to
rounding, never a finite-difference estimate.  Parameter gradients of any
loss expressed through per-point jet adjoints are obtained by reverse
accumulation through the same propagation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, ContractError, OptimizerError, ParseError

CHECKPOINT_VERSION = 1


# ---------------------------------------------------------------------------
# data types
# ---------------------------------------------------------------------------

# packed symmetric Hessian entry order
HESS_PACK = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))


@dataclass(frozen=True)
class Jet3:
    """Second-order jet of a scalar field at one point.

    ``hess6`` packs the symmetric Hessian as (xx, yy, zz, xy, xz, yz);
    the ``hess`` property rebuilds the full matrix, which is symmetric
    bitwise because mirrored entries come from the same stored scalar.
    """

    value: float
    grad: np.ndarray
    hess6: np.ndarray

    @property
    def hess(self) -> np.ndarray:
        h = np.empty((3, 3), dtype=np.float64)
        for k, (i, j) in enumerate(HESS_PACK):
            h[i, j] = self.hess6[k]
            h[j, i] = self.hess6[k]
        return h

    @staticmethod
    def pack_hess(full: np.ndarray) -> np.ndarray:
        return np.array([full[i, j] for i, j in HESS_PACK], dtype=np.float64)


@dataclass
class MlpParams:
    """Weights of the signed-distance MLP.

    ``layers`` holds (weight, bias) pairs in evaluation order; weights are
    (out, in).  ``skip_layer``, when set, is the index of the affine layer
    whose input is the previous activation concatenated with the raw
    3-vector input.
    """

    layers: list
    hidden_width: int
    hidden_depth: int
    beta: float = 100.0
    skip_layer: Optional[int] = None

    def validate(self) -> None:
        if self.hidden_width < 2 or self.hidden_depth < 1:
            raise ConfigurationError(
                f"network needs width >= 2 and depth >= 1, got "
                f"{self.hidden_width}x{self.hidden_depth}"
            )
        if len(self.layers) != self.hidden_depth + 1:
            raise ConfigurationError(
                f"expected {self.hidden_depth + 1} affine layers, got {len(self.layers)}"
            )
        expect_in = 3
        for li, (w, b) in enumerate(self.layers):
            if li == self.skip_layer:
                expect_in += 3
            if w.shape != (b.shape[0], expect_in):
                raise ConfigurationError(
                    f"layer {li}: weight shape {w.shape} does not chain "
                    f"(expected in={expect_in})"
                )
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ConfigurationError(f"layer {li}: non-finite parameters")
            expect_in = w.shape[0]
        if expect_in != 1:
            raise ConfigurationError("final layer must have a single output")

    @property
    def dtype(self) -> np.dtype:
        return self.layers[0][0].dtype

    def copy(self) -> "MlpParams":
        return MlpParams(
            layers=[(w.copy(), b.copy()) for w, b in self.layers],
            hidden_width=self.hidden_width,
            hidden_depth=self.hidden_depth,
            beta=self.beta,
            skip_layer=self.skip_layer,
        )

    def n_parameters(self) -> int:
        return sum(w.size + b.size for w, b in self.layers)


@dataclass
class ParamGrads:
    """Per-layer (dW, db) in the same order/shapes as MlpParams.layers."""

    layers: list

    @staticmethod
    def zeros_like(params: MlpParams) -> "ParamGrads":
        return ParamGrads([(np.zeros_like(w), np.zeros_like(b)) for w, b in params.layers])

    def add_(self, other: "ParamGrads") -> "ParamGrads":
        for (dw, db), (ow, ob) in zip(self.layers, other.layers):
            dw += ow
            db += ob
        return self

    def scale_(self, c: float) -> "ParamGrads":
        for dw, db in self.layers:
            dw *= c
            db *= c
        return self


@dataclass
class AdamState:
    first_moment: list
    second_moment: list
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @staticmethod
    def for_params(params: MlpParams, beta1: float = 0.9, beta2: float = 0.999,
                   eps: float = 1e-8) -> "AdamState":
        zeros = lambda: [(np.zeros_like(w), np.zeros_like(b)) for w, b in params.layers]
        return AdamState(zeros(), zeros(), 0, beta1, beta2, eps)


# ---------------------------------------------------------------------------
# softplus and its derivatives
# ---------------------------------------------------------------------------

def _softplus_terms(z: np.ndarray, beta: float, want_sigmoid: bool):
    """Softplus value and (optionally) sigmoid(beta z), sharing one exp.

    value = max(z,0) + log1p(exp(-|beta z|))/beta is stable for any
    magnitude; the second and third activation derivatives are cheap
    polynomials of the sigmoid.
    """
    e = np.exp(-np.abs(beta * z))
    value = np.maximum(z, 0.0) + np.log1p(e) / beta
    if not want_sigmoid:
        return value, None
    s1 = np.where(z >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))
    return value, s1


def _sigmoid_d23(s1: np.ndarray, beta: float):
    """Second and third softplus derivatives from the cached sigmoid."""
    s1m = s1 * (1.0 - s1)
    return beta * s1m, beta * beta * s1m * (1.0 - 2.0 * s1)


# ---------------------------------------------------------------------------
# forward jet propagation
# ---------------------------------------------------------------------------
#
# Batched layout keeps the feature axis last so affine maps reduce to a
# single GEMM per jet component:
#   v: (B, m)      value
#   G: (B, 3, m)   d v / d x_j
#   H: (B, 6, m)   d^2 v packed symmetric per HESS_PACK
#
# The tape records, per op, whatever the reverse pass needs.

# packed outer-product index pairs: (Gz_a * Gz_b) per HESS_PACK entry
_P6A = np.array([0, 1, 2, 0, 0, 1])
_P6B = np.array([0, 1, 2, 1, 2, 2])


def _unpack_hess(h6: np.ndarray) -> np.ndarray:
    """(B, 6) packed -> (B, 3, 3) full, symmetric bitwise."""
    full = np.empty(h6.shape[:-1] + (3, 3), dtype=h6.dtype)
    for p, (i, j) in enumerate(HESS_PACK):
        full[..., i, j] = h6[..., p]
        full[..., j, i] = h6[..., p]
    return full


def _pack_hess_adjoint(d_hess: np.ndarray) -> np.ndarray:
    """Full-matrix Hessian adjoint (B, 3, 3) -> packed (B, 6).

    Off-diagonal packed slots absorb both mirrored entries, so the packed
    adjoint satisfies dL = sum_p packed[p] * dH6[p].
    """
    packed = np.empty(d_hess.shape[:-2] + (6,), dtype=np.float64)
    for p, (i, j) in enumerate(HESS_PACK):
        packed[..., p] = d_hess[..., i, j] if i == j else \
            d_hess[..., i, j] + d_hess[..., j, i]
    return packed


def _forward_tape(params: MlpParams, x: np.ndarray, order: int,
                  want_tape: bool = True):
    dtype = params.dtype
    x = np.ascontiguousarray(x, dtype=dtype)
    if x.ndim != 2 or x.shape[1] != 3:
        raise ContractError(f"points must be (B, 3), got {x.shape}")
    n_points = x.shape[0]
    n_layers = len(params.layers)
    eye3 = np.eye(3, dtype=dtype)

    v = x
    G = np.broadcast_to(eye3, (n_points, 3, 3)).copy() if order >= 1 else None
    H = np.zeros((n_points, 6, 3), dtype=dtype) if order >= 2 else None

    tape = []
    for li, (w, b) in enumerate(params.layers):
        if li == params.skip_layer:
            v = np.concatenate([v, x], axis=1)
            if order >= 1:
                eye = np.broadcast_to(eye3, (n_points, 3, 3))
                G = np.concatenate([G, eye], axis=2)
            if order >= 2:
                H = np.concatenate([H, np.zeros((n_points, 6, 3), dtype=dtype)],
                                   axis=2)
            if want_tape:
                tape.append(("skip",))
        if want_tape:
            tape.append(("affine", li, v, G, H))
        m, m_out = w.shape[1], w.shape[0]
        v = v @ w.T + b
        if order >= 1:
            G = np.ascontiguousarray(G).reshape(n_points * 3, m) @ w.T
            G = G.reshape(n_points, 3, m_out)
        if order >= 2:
            H = np.ascontiguousarray(H).reshape(n_points * 6, m) @ w.T
            H = H.reshape(n_points, 6, m_out)
        if li < n_layers - 1:
            want_s1 = want_tape or order >= 1
            value, s1 = _softplus_terms(v, params.beta, want_s1)
            Gz, Hz = G, H
            outer = None
            v = value
            if order >= 2:
                s2, _ = _sigmoid_d23(s1, params.beta)
                G = s1[:, None, :] * Gz
                outer = Gz[:, _P6A, :] * Gz[:, _P6B, :]
                H = s1[:, None, :] * Hz
                H += s2[:, None, :] * outer
            elif order >= 1:
                G = s1[:, None, :] * Gz
            if want_tape:
                tape.append(("act", s1, Gz, Hz, outer))
    return v, G, H, tape


def forward_jets(params: MlpParams, points: np.ndarray, order: int = 2):
    """Evaluate the field jet at a batch of points.

    Returns (values (B,), grads (B,3), hess (B,3,3)); grads/hess are None
    when a lower ``order`` was requested.
    """
    v, G, H, _ = _forward_tape(params, np.atleast_2d(points), order,
                               want_tape=False)
    values = v[:, 0]
    grads = G[:, :, 0] if order >= 1 else None
    hess = _unpack_hess(H[:, :, 0]) if order >= 2 else None
    return values, grads, hess


def jets_with_tape(params: MlpParams, points: np.ndarray, order: int = 2):
    """Like forward_jets but also returns the tape for backprop_tape."""
    v, G, H, tape = _forward_tape(params, np.atleast_2d(points), order)
    values = v[:, 0]
    grads = G[:, :, 0] if order >= 1 else None
    hess = _unpack_hess(H[:, :, 0]) if order >= 2 else None
    return values, grads, hess, tape


def forward_jet(params: MlpParams, x) -> Jet3:
    """Value, gradient and Hessian of the field at a single point."""
    x = np.asarray(x, dtype=np.float64).reshape(1, 3)
    if not np.isfinite(x).all():
        raise ContractError("point must be finite")
    values, grads, hess = forward_jets(params, x, order=2)
    return Jet3(float(values[0]), grads[0], Jet3.pack_hess(hess[0]))


def forward_values(params: MlpParams, points: np.ndarray) -> np.ndarray:
    """Field values only (cheapest path, used for grid evaluation)."""
    values, _, _ = forward_jets(params, points, order=0)
    return values


# ---------------------------------------------------------------------------
# reverse accumulation of parameter gradients
# ---------------------------------------------------------------------------

def loss_param_grads(params: MlpParams, points: np.ndarray,
                     d_value: Optional[np.ndarray] = None,
                     d_grad: Optional[np.ndarray] = None,
                     d_hess: Optional[np.ndarray] = None) -> ParamGrads:
    """dLoss/dTheta for a loss given by per-point jet adjoints.

    The loss is assumed to be sum_i [ d_value[i] * f(x_i)
    + <d_grad[i], grad f(x_i)> + <d_hess[i], Hess f(x_i)> ]; each adjoint
    may be None (treated as zero, and the corresponding jet order is then
    skipped entirely).  Batch accumulation order is fixed by the input
    ordering, so results are reproducible.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    order = 2 if d_hess is not None else (1 if d_grad is not None else 0)
    _, _, _, tape = _forward_tape(params, points, order)
    return backprop_tape(params, tape, points.shape[0], d_value, d_grad, d_hess)


def backprop_tape(params: MlpParams, tape, n_points: int,
                  d_value: Optional[np.ndarray] = None,
                  d_grad: Optional[np.ndarray] = None,
                  d_hess: Optional[np.ndarray] = None) -> ParamGrads:
    """Reverse accumulation through a recorded forward tape (see loss_param_grads)."""
    if n_points == 0:
        raise ContractError("batch must be non-empty")
    if d_value is not None and np.shape(d_value) != (n_points,):
        raise ContractError(f"d_value shape {np.shape(d_value)} != ({n_points},)")
    if d_grad is not None and np.shape(d_grad) != (n_points, 3):
        raise ContractError(f"d_grad shape {np.shape(d_grad)} != ({n_points}, 3)")
    if d_hess is not None and np.shape(d_hess) != (n_points, 3, 3):
        raise ContractError(f"d_hess shape {np.shape(d_hess)} != ({n_points}, 3, 3)")

    order = 2 if d_hess is not None else (1 if d_grad is not None else 0)
    dtype = params.dtype
    # output adjoints, width-1 feature axis; Hessian adjoints packed
    vb = (np.asarray(d_value, dtype=dtype)[:, None]
          if d_value is not None else np.zeros((n_points, 1), dtype=dtype))
    Gb = (np.asarray(d_grad, dtype=dtype)[:, :, None]
          if d_grad is not None else None)
    Hb = (_pack_hess_adjoint(np.asarray(d_hess, dtype=np.float64))
          .astype(dtype)[:, :, None]
          if d_hess is not None else None)
    if order < 1:
        Gb = None
    if order < 2:
        Hb = None

    grads = ParamGrads.zeros_like(params)
    beta = params.beta
    for op in reversed(tape):
        if op[0] == "act":
            _, s1, Gz, Hz, outer = op
            s2, s3 = _sigmoid_d23(s1, beta)
            new_vb = s1 * vb
            if Gb is not None:
                new_vb += s2 * np.einsum("bjm,bjm->bm", Gb, Gz)
            if Hb is not None:
                new_vb += s2 * np.einsum("bpm,bpm->bm", Hb, Hz)
                new_vb += s3 * np.einsum("bpm,bpm->bm", Hb, outer)
                # d(outer term)/dGz: packed adjoint already carries both
                # mirrored off-diagonal entries, diagonals need the factor 2
                hsym_g = np.empty_like(Gz)
                hsym_g[:, 0, :] = (2.0 * Hb[:, 0, :] * Gz[:, 0, :]
                                   + Hb[:, 3, :] * Gz[:, 1, :]
                                   + Hb[:, 4, :] * Gz[:, 2, :])
                hsym_g[:, 1, :] = (Hb[:, 3, :] * Gz[:, 0, :]
                                   + 2.0 * Hb[:, 1, :] * Gz[:, 1, :]
                                   + Hb[:, 5, :] * Gz[:, 2, :])
                hsym_g[:, 2, :] = (Hb[:, 4, :] * Gz[:, 0, :]
                                   + Hb[:, 5, :] * Gz[:, 1, :]
                                   + 2.0 * Hb[:, 2, :] * Gz[:, 2, :])
            new_Gb = None
            if Gb is not None:
                new_Gb = s1[:, None, :] * Gb
            if Hb is not None:
                extra = s2[:, None, :] * hsym_g
                new_Gb = extra if new_Gb is None else new_Gb + extra
            new_Hb = s1[:, None, :] * Hb if Hb is not None else None
            vb, Gb, Hb = new_vb, new_Gb, new_Hb
        elif op[0] == "affine":
            _, li, v_in, G_in, H_in = op
            w, _ = params.layers[li]
            dW, db = grads.layers[li]
            dW += vb.T @ v_in
            db += vb.sum(axis=0)
            if Gb is not None:
                m_out = Gb.shape[-1]
                dW += (Gb.reshape(n_points * 3, m_out).T
                       @ np.ascontiguousarray(G_in).reshape(n_points * 3, -1))
            if Hb is not None:
                m_out = Hb.shape[-1]
                dW += (Hb.reshape(n_points * 6, m_out).T
                       @ np.ascontiguousarray(H_in).reshape(n_points * 6, -1))
            vb = vb @ w
            if Gb is not None:
                Gb = (Gb.reshape(n_points * 3, -1) @ w).reshape(n_points, 3, -1)
            if Hb is not None:
                Hb = (Hb.reshape(n_points * 6, -1) @ w).reshape(n_points, 6, -1)
        else:  # skip concat: drop the adjoint of the raw-input block
            vb = vb[:, :-3]
            if Gb is not None:
                Gb = Gb[:, :, :-3]
            if Hb is not None:
                Hb = Hb[:, :, :-3]
    return grads


# ---------------------------------------------------------------------------
# initialization and the optimizer
# ---------------------------------------------------------------------------

def init_geometric(hidden_width: int, hidden_depth: int, sphere_radius: float,
                   seed: int, beta: float = 100.0, skip: bool = True,
                   dtype=np.float64, fit_steps: int = 400) -> MlpParams:
    """Initialize so the zero-level set approximates an origin-centered sphere.

    Hidden layers get variance-preserving Gaussian weights; the output layer
    gets near-constant positive weights and bias -sphere_radius, putting the
    field close to ||x|| - r in expectation.  A short deterministic Adam fit
    against the exact sphere distance (values and gradients) then tightens
    the start: the zero set lands on the sphere, the gradient starts near
    unit norm, and the field is safely positive out to the extraction
    margin, so the very first zero-level extraction succeeds.
    """
    if hidden_width < 2 or hidden_depth < 1:
        raise ConfigurationError(
            f"invalid network shape {hidden_width}x{hidden_depth}")
    if not (0.0 < sphere_radius < 0.5):
        raise ConfigurationError(
            f"sphere_radius must lie in (0, 0.5), got {sphere_radius}")

    rng = np.random.default_rng(seed)
    skip_layer = hidden_depth // 2 if (skip and hidden_depth >= 2) else None

    dims = [3] + [hidden_width] * hidden_depth + [1]
    layers = []
    for li in range(hidden_depth + 1):
        d_in, d_out = dims[li], dims[li + 1]
        if li == skip_layer:
            d_in += 3
        if li == hidden_depth:  # output layer
            w = rng.normal(np.sqrt(np.pi / d_in), 1e-5, size=(d_out, d_in))
            b = np.full(d_out, -sphere_radius, dtype=np.float64)
        else:
            w = rng.normal(0.0, np.sqrt(2.0 / d_out), size=(d_out, d_in))
            if li == skip_layer:
                w[:, -3:] = 0.0
            b = np.zeros(d_out)
        layers.append((w.astype(dtype), b.astype(dtype)))

    params = MlpParams(layers, hidden_width, hidden_depth, beta, skip_layer)
    params.validate()

    state = AdamState.for_params(params)
    batch = max(4 * hidden_width, 256)
    for _ in range(fit_steps):
        pts = rng.uniform(-0.6, 0.6, size=(batch, 3))
        dist = np.linalg.norm(pts, axis=1)
        dist = np.where(dist > 1e-9, dist, 1e-9)
        target_v = dist - sphere_radius
        target_g = pts / dist[:, None]
        values, grads, _, tape = jets_with_tape(params, pts, order=1)
        d_value = 2.0 * (values - target_v) / batch
        d_grad = 2.0 * (grads - target_g) / batch
        step_grads = backprop_tape(params, tape, batch, d_value=d_value,
                                   d_grad=d_grad)
        params, state = adam_step(params, step_grads, state, lr=1e-3)
    return params


def adam_step(params: MlpParams, grads: ParamGrads, state: AdamState,
              lr: float) -> tuple[MlpParams, AdamState]:
    """One bias-corrected Adam update; returns fresh params and state."""
    if lr <= 0:
        raise ContractError(f"learning rate must be positive, got {lr}")
    if len(grads.layers) != len(params.layers):
        raise ContractError("gradient/parameter layer count mismatch")
    for li, ((w, b), (dw, db)) in enumerate(zip(params.layers, grads.layers)):
        if dw.shape != w.shape or db.shape != b.shape:
            raise ContractError(f"layer {li}: gradient shape mismatch")
        if not (np.isfinite(dw).all() and np.isfinite(db).all()):
            raise OptimizerError(f"non-finite gradient in layer {li}")

    t = state.step_count + 1
    b1, b2, eps = state.beta1, state.beta2, state.eps
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_layers, new_m, new_v = [], [], []
    for (w, b), (dw, db), (mw, mb), (vw, vb) in zip(
            params.layers, grads.layers, state.first_moment, state.second_moment):
        mw2 = b1 * mw + (1 - b1) * dw
        mb2 = b1 * mb + (1 - b1) * db
        vw2 = b2 * vw + (1 - b2) * dw * dw
        vb2 = b2 * vb + (1 - b2) * db * db
        w2 = w - lr * (mw2 / c1) / (np.sqrt(vw2 / c2) + eps)
        b2_ = b - lr * (mb2 / c1) / (np.sqrt(vb2 / c2) + eps)
        new_layers.append((w2, b2_))
        new_m.append((mw2, mb2))
        new_v.append((vw2, vb2))
    new_params = MlpParams(new_layers, params.hidden_width, params.hidden_depth,
                           params.beta, params.skip_layer)
    new_state = AdamState(new_m, new_v, t, b1, b2, eps)
    return new_params, new_state


# ---------------------------------------------------------------------------
# checkpoint container
# ---------------------------------------------------------------------------

def save_checkpoint(path, params: MlpParams, adam: Optional[AdamState] = None) -> None:
    """Write a flat .npz with layer shapes, weights, activation and Adam state."""
    arrays = {
        "version": np.array(CHECKPOINT_VERSION),
        "hidden_width": np.array(params.hidden_width),
        "hidden_depth": np.array(params.hidden_depth),
        "beta": np.array(params.beta),
        "skip_layer": np.array(-1 if params.skip_layer is None else params.skip_layer),
        "n_layers": np.array(len(params.layers)),
    }
    for li, (w, b) in enumerate(params.layers):
        arrays[f"w{li}"] = w
        arrays[f"b{li}"] = b
    arrays["has_adam"] = np.array(1 if adam is not None else 0)
    if adam is not None:
        arrays["adam_step"] = np.array(adam.step_count)
        arrays["adam_hyper"] = np.array([adam.beta1, adam.beta2, adam.eps])
        for li, ((mw, mb), (vw, vb)) in enumerate(
                zip(adam.first_moment, adam.second_moment)):
            arrays[f"m_w{li}"] = mw
            arrays[f"m_b{li}"] = mb
            arrays[f"v_w{li}"] = vw
            arrays[f"v_b{li}"] = vb
    np.savez(path, **arrays)


def load_checkpoint(path) -> tuple[MlpParams, Optional[AdamState]]:
    with np.load(path) as data:
        if "version" not in data:
            raise ParseError(f"{path}: missing checkpoint version tag")
        version = int(data["version"])
        if version != CHECKPOINT_VERSION:
            raise ParseError(f"{path}: unsupported checkpoint version {version}")
        n_layers = int(data["n_layers"])
        layers = [(data[f"w{li}"], data[f"b{li}"]) for li in range(n_layers)]
        skip = int(data["skip_layer"])
        params = MlpParams(
            layers=layers,
            hidden_width=int(data["hidden_width"]),
            hidden_depth=int(data["hidden_depth"]),
            beta=float(data["beta"]),
            skip_layer=None if skip < 0 else skip,
        )
        params.validate()
        adam = None
        if int(data["has_adam"]):
            b1, b2, eps = data["adam_hyper"]
            adam = AdamState(
                first_moment=[(data[f"m_w{li}"], data[f"m_b{li}"]) for li in range(n_layers)],
                second_moment=[(data[f"v_w{li}"], data[f"v_b{li}"]) for li in range(n_layers)],
                step_count=int(data["adam_step"]),
                beta1=float(b1), beta2=float(b2), eps=float(eps),
            )
    return params, adam
