"""MILP embedding of trained networks.

A ReLU neuron with pre-activation bounds [L, U] is encoded with a binary
switch and four rows: the output sits above the pre-activation and above
zero, and two big-M rows tie it down on either side of the switch.  Neurons
whose interval bounds already fix the sign need no binary at all: U <= 0
pins the output to zero and L >= 0 makes the neuron an identity.  Bounds
come from plain interval arithmetic over the input box, which is sound by
construction, so every feasible point of the embedded model reproduces the
exact forward pass.

Outputs of embedded stages are passed around as affine "terms": either
("var", index) or ("const", value).  Constants are folded into downstream
rows instead of occupying columns.
"""

from dataclasses import dataclass, field

import numpy as np

from ccgkit.milp import MilpModel, VarKind
from ccgkit.nn.layers import ColumnScaler, DenseLayer, ValueModel, run_layers


# ---------------------------------------------------------------------------
# interval bound propagation


@dataclass
class BoundBox:
    """Per-layer pre- and post-activation interval bounds."""

    input_lo: np.ndarray
    input_hi: np.ndarray
    pre: list = field(default_factory=list)   # (lo, hi) per layer
    post: list = field(default_factory=list)  # (lo, hi) per layer

    @property
    def output_lo(self) -> np.ndarray:
        return self.post[-1][0]

    @property
    def output_hi(self) -> np.ndarray:
        return self.post[-1][1]


def propagate_bounds(layers, input_lo, input_hi, first_pre=None, pre_clips=None) -> BoundBox:
    """Interval arithmetic through a layer stack.

    For an affine map the extremes split by weight sign; ReLU clips at zero.
    Shrinking the input box never loosens any interval.  ``first_pre`` may
    supply externally proven pre-activation bounds for the first layer (from
    side constraints the box cannot express) and ``pre_clips`` one optional
    (lo, hi) pair per layer; both are intersected with the interval bounds,
    never trusted to widen them, and the clipped ranges feed the layers
    below.
    """
    lo = np.asarray(input_lo, dtype=np.float64)
    hi = np.asarray(input_hi, dtype=np.float64)
    if np.any(lo > hi):
        raise ValueError("input box has lo > hi")
    box = BoundBox(lo.copy(), hi.copy())
    for li, layer in enumerate(layers):
        wp = np.maximum(layer.weight, 0.0)
        wn = np.minimum(layer.weight, 0.0)
        zlo = wp @ lo + wn @ hi + layer.bias
        zhi = wp @ hi + wn @ lo + layer.bias
        if li == 0 and first_pre is not None:
            zlo = np.maximum(zlo, first_pre[0])
            zhi = np.minimum(zhi, first_pre[1])
        if pre_clips is not None and pre_clips[li] is not None:
            zlo = np.maximum(zlo, pre_clips[li][0])
            zhi = np.minimum(zhi, pre_clips[li][1])
            zhi = np.maximum(zhi, zlo)
        box.pre.append((zlo, zhi))
        if layer.activation == "relu":
            lo = np.maximum(zlo, 0.0)
            hi = np.maximum(zhi, 0.0)
        else:
            lo, hi = zlo.copy(), zhi.copy()
        box.post.append((lo.copy(), hi.copy()))
    return box


def budgeted_linear_range(weight, bias, cap):
    """Tight range of ``weight @ xi + bias`` over the budgeted box.

    The feasible set is {xi in [0,1]^q : sum(xi) <= cap}.  Each row's
    extreme puts unit mass on its largest coefficients until the cap is
    spent, which is the exact LP optimum for this polytope.
    """
    weight = np.asarray(weight, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    cap = float(cap)

    def best(row):
        gains = np.sort(row[row > 0.0])[::-1]
        take = min(cap, float(len(gains)))
        full = int(take)
        v = float(gains[:full].sum())
        if full < len(gains) and take > full:
            v += (take - full) * float(gains[full])
        return v

    hi = bias + np.array([best(row) for row in weight])
    lo = bias - np.array([best(-row) for row in weight])
    return lo, hi


# ---------------------------------------------------------------------------
# terms: affine combinations of model variables


VAR, CONST = "var", "const"


def _affine_row(weights, terms, bias):
    """Collapse weighted terms into (coeff dict, constant)."""
    coeffs: dict[int, float] = {}
    const = float(bias)
    for w, term in zip(weights, terms):
        if w == 0.0:
            continue
        kind, val = term
        if kind == CONST:
            const += w * val
        else:
            coeffs[val] = coeffs.get(val, 0.0) + float(w)
    return coeffs, const


@dataclass
class EmbeddedNet:
    """Handle to one embedded layer stack inside a model.

    ``pre_vars`` mirrors the layer stack: one entry per neuron holding the
    index of its pre-activation variable, or None where the neuron was
    folded to a constant or pinned to zero.
    """

    input_terms: list
    output_terms: list
    binary_vars: list
    bounds: BoundBox
    pre_vars: list = field(default_factory=list)


def embed_mlp(
    m: MilpModel,
    layers,
    input_terms,
    input_lo,
    input_hi,
    prefix: str = "nn",
    first_pre=None,
    pre_clips=None,
) -> EmbeddedNet:
    """Encode a layer stack over existing variables or constants.

    ``input_terms`` is a list of ("var", idx) or ("const", value) entries
    matching the first layer's input dimension.  Returns the handle with one
    output term per neuron of the last layer and the list of ReLU binaries
    actually created (sign-fixed neurons are eliminated).  ``first_pre`` and
    ``pre_clips`` pass through to the bound propagation.
    """
    box = propagate_bounds(layers, input_lo, input_hi, first_pre=first_pre, pre_clips=pre_clips)
    cur = list(input_terms)
    binaries = []
    pre_vars = []
    for li, layer in enumerate(layers):
        zlo, zhi = box.pre[li]
        nxt = []
        pv = []
        for i in range(layer.weight.shape[0]):
            coeffs, const = _affine_row(layer.weight[i], cur, layer.bias[i])
            L, U = float(zlo[i]), float(zhi[i])
            if not coeffs:
                # neuron input fully constant: fold the exact value through
                val = const
                if layer.activation == "relu":
                    val = max(val, 0.0)
                nxt.append((CONST, val))
                pv.append(None)
                continue
            if layer.activation != "relu":
                h = m.add_var(L, U, name=f"{prefix}_l{li}n{i}")
                m.add_constr({**coeffs, h: -1.0}, "=", -const)
                nxt.append((VAR, h))
                pv.append(h)
                continue
            if U <= 0.0:
                nxt.append((CONST, 0.0))
                pv.append(None)
                continue
            h = m.add_var(L, U, name=f"{prefix}_l{li}n{i}_z")
            m.add_constr({**coeffs, h: -1.0}, "=", -const)
            pv.append(h)
            if L >= 0.0:
                nxt.append((VAR, h))
                continue
            a = m.add_var(0.0, U, name=f"{prefix}_l{li}n{i}_a")
            d = m.add_var(kind=VarKind.BINARY, name=f"{prefix}_l{li}n{i}_d")
            m.add_constr({a: 1.0, h: -1.0}, ">=", 0.0)
            m.add_constr({a: 1.0, h: -1.0, d: -L}, "<=", -L)
            m.add_constr({a: 1.0, d: -U}, "<=", 0.0)
            binaries.append(d)
            nxt.append((VAR, a))
        cur = nxt
        pre_vars.append(pv)
    return EmbeddedNet(list(input_terms), cur, binaries, box, pre_vars)


# ---------------------------------------------------------------------------
# argmax selector gadget


@dataclass
class ArgmaxGadget:
    z_vars: list
    u_var: int
    xi_vars: list
    lo: float
    hi: float


def embed_argmax(m: MilpModel, p_terms, scenarios, lo: float, hi: float, prefix="sel") -> ArgmaxGadget:
    """Selector over per-scenario prediction terms.

    Exactly one binary z_j is on; the envelope u dominates every prediction
    from above and is pinned to the selected one from below, so a feasible
    selector must mark a maximizer.  The selected scenario vector is exposed
    as variables tied to sum(z_j * scenario_j).
    """
    k = len(p_terms)
    if k == 0:
        raise ValueError("argmax gadget needs at least one scenario")
    if not scenarios or len(scenarios) != k:
        raise ValueError("scenario list must match prediction terms")
    gap = hi - lo
    z = [m.add_var(kind=VarKind.BINARY, name=f"{prefix}_z{j}") for j in range(k)]
    u = m.add_var(lo, hi, name=f"{prefix}_u")
    m.add_constr({zj: 1.0 for zj in z}, "=", 1.0)
    for j, term in enumerate(p_terms):
        coeffs, const = _affine_row([1.0], [term], 0.0)
        m.add_constr({u: 1.0, **{kk: -vv for kk, vv in coeffs.items()}}, ">=", const)
        m.add_constr(
            {u: 1.0, **{kk: -vv for kk, vv in coeffs.items()}, z[j]: gap},
            "<=",
            const + gap,
        )
    dim = len(np.asarray(scenarios[0]).ravel())
    xi_vars = []
    mats = [np.asarray(s, dtype=np.float64).ravel() for s in scenarios]
    for d in range(dim):
        colvals = [mat[d] for mat in mats]
        v = m.add_var(min(colvals), max(colvals), name=f"{prefix}_xi{d}")
        m.add_constr({v: 1.0, **{z[j]: -colvals[j] for j in range(k)}}, "=", 0.0)
        xi_vars.append(v)
    return ArgmaxGadget(z, u, xi_vars, lo, hi)


# ---------------------------------------------------------------------------
# composed builders for the two value paths


def scaling_matrix(scaler: ColumnScaler) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal scale and offset with constant columns zeroed out."""
    span = scaler.span
    s = np.where(span > 0.0, 1.0 / np.where(span > 0.0, span, 1.0), 0.0)
    off = -scaler.mins * s
    return s, off


def embed_first_stage_path(
    m: MilpModel,
    model: ValueModel,
    rows_at_zero: np.ndarray,
    rows_at_one: np.ndarray,
    x_vars,
    prefix: str = "fx",
):
    """Embed the first-stage embedding as a function of binary decision vars.

    Each element's feature row depends on exactly one binary x_i, so the
    element net takes just two values per element; the embedding output is
    their exact interpolation, linear in x_i, and needs no ReLU binaries.
    The post-aggregation net is then embedded generically.

    Returns (output terms, EmbeddedNet of the post net, aggregate bounds).
    """
    n = len(x_vars)
    f0 = model.x_scaler.transform(np.asarray(rows_at_zero, dtype=np.float64))
    f1 = model.x_scaler.transform(np.asarray(rows_at_one, dtype=np.float64))
    phi0 = run_layers(model.x_encoder.element_net, f0)  # (n, d)
    phi1 = run_layers(model.x_encoder.element_net, f1)
    low = np.minimum(phi0, phi1).sum(axis=0)
    high = np.maximum(phi0, phi1).sum(axis=0)
    base = phi0.sum(axis=0)
    delta = phi1 - phi0  # (n, d)
    d_dim = phi0.shape[1]
    g_terms = []
    for d in range(d_dim):
        g = m.add_var(float(low[d]), float(high[d]), name=f"{prefix}_g{d}")
        coeffs = {g: 1.0}
        for i in range(n):
            if delta[i, d] != 0.0:
                coeffs[x_vars[i]] = coeffs.get(x_vars[i], 0.0) - float(delta[i, d])
        m.add_constr(coeffs, "=", float(base[d]))
        g_terms.append((VAR, g))
    net = embed_mlp(m, model.x_encoder.post_net, g_terms, low, high, prefix=f"{prefix}_post")
    return net.output_terms, net


def embed_scenario_path(
    m: MilpModel,
    model: ValueModel,
    feature_maps,
    xi_vars,
    xi_lo,
    xi_hi,
    prefix: str = "sx",
    budget_cap=None,
    clips=None,
):
    """Embed the scenario embedding as a function of scenario variables.

    ``feature_maps`` holds one (C, d) pair per element with raw features
    C @ xi + d.  The feature scaling and the first element-net layer fold
    into one affine layer per element over the shared scenario variables;
    deeper layers embed generically.  When the scenario set carries a mass
    cap sum(xi) <= budget_cap on a [0,1] box, the folded first layer gets
    the exact range over that polytope instead of the loose box interval.
    ``clips`` may map "e{i}" and "post" to per-layer pre-activation clip
    lists from an earlier tightening pass.  Returns (output terms, info
    dict).
    """
    clips = clips or {}
    xi_lo = np.asarray(xi_lo, dtype=np.float64)
    xi_hi = np.asarray(xi_hi, dtype=np.float64)
    s, off = scaling_matrix(model.xi_scaler)
    first = model.xi_encoder.element_net[0]
    rest = model.xi_encoder.element_net[1:]
    xi_terms = [(VAR, v) for v in xi_vars]

    elem_nets = []
    agg_lo = None
    agg_hi = None
    elem_outputs = []
    for ei, (C, dconst) in enumerate(feature_maps):
        C = np.asarray(C, dtype=np.float64)
        dconst = np.asarray(dconst, dtype=np.float64)
        # scaled features: diag(s) @ (C xi + dconst) + off
        w_eff = first.weight @ (s[:, None] * C)
        b_eff = first.weight @ (s * dconst + off) + first.bias
        folded = [DenseLayer(w_eff, b_eff, first.activation)] + rest
        first_pre = None
        if budget_cap is not None:
            first_pre = budgeted_linear_range(w_eff, b_eff, budget_cap)
        net = embed_mlp(
            m,
            folded,
            xi_terms,
            xi_lo,
            xi_hi,
            prefix=f"{prefix}_e{ei}",
            first_pre=first_pre,
            pre_clips=clips.get(f"e{ei}"),
        )
        elem_nets.append(net)
        elem_outputs.append(net.output_terms)
        lo_e, hi_e = net.bounds.output_lo, net.bounds.output_hi
        agg_lo = lo_e.copy() if agg_lo is None else agg_lo + lo_e
        agg_hi = hi_e.copy() if agg_hi is None else agg_hi + hi_e

    d_dim = len(elem_outputs[0])
    g_terms = []
    for d in range(d_dim):
        weights = [1.0] * len(elem_outputs)
        terms = [outs[d] for outs in elem_outputs]
        coeffs, const = _affine_row(weights, terms, 0.0)
        g = m.add_var(float(agg_lo[d]), float(agg_hi[d]), name=f"{prefix}_g{d}")
        m.add_constr({**coeffs, g: -1.0}, "=", -const)
        g_terms.append((VAR, g))
    post = embed_mlp(
        m,
        model.xi_encoder.post_net,
        g_terms,
        agg_lo,
        agg_hi,
        prefix=f"{prefix}_post",
        pre_clips=clips.get("post"),
    )
    binaries = [b for net in elem_nets for b in net.binary_vars] + post.binary_vars
    info = {"element_nets": elem_nets, "post_net": post, "binaries": binaries}
    return post.output_terms, info


def embed_value_head(
    m: MilpModel,
    model: ValueModel,
    var_terms,
    var_lo,
    var_hi,
    const_embedding,
    const_side: str,
    prefix: str = "val",
    pre_clips=None,
) -> EmbeddedNet:
    """Embed the value net with one side variable and the other constant.

    ``const_side`` says which half of the concatenated input is fixed:
    "scenario" fixes the scenario embedding (main-problem use), "first_stage"
    fixes the decision embedding (adversarial use).  The constant half folds
    into the first layer bias.
    """
    first = model.value_net[0]
    rest = model.value_net[1:]
    d = len(var_terms)
    const_embedding = np.asarray(const_embedding, dtype=np.float64)
    if const_side == "scenario":
        w_var = first.weight[:, :d]
        w_const = first.weight[:, d:]
    elif const_side == "first_stage":
        w_var = first.weight[:, first.weight.shape[1] - d :]
        w_const = first.weight[:, : first.weight.shape[1] - d]
    else:
        raise ValueError("const_side must be 'scenario' or 'first_stage'")
    if w_const.shape[1] != len(const_embedding):
        raise ValueError("constant embedding width does not match the value net")
    folded = [DenseLayer(w_var, first.bias + w_const @ const_embedding, first.activation)] + rest
    return embed_mlp(m, folded, var_terms, var_lo, var_hi, prefix=prefix, pre_clips=pre_clips)
