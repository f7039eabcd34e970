"""Offline phase: datasets of exact boundary traces, loss, training loop.

Targets come from the closed-form boundary behaviour of the lowest-order
hat functions: piecewise linear along each edge, one at the owning vertex,
zero at the others. Control points live on the canonicalized elements, so
one network serves all elements with a given vertex count.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, ModelMismatchError, TrainingDivergenceError
from .geometry import (
    MeshAssumptionParams,
    Polygon,
    check_containment,
    inertial_map,
    random_polygon,
    vertex_canonical_polygon,
)
from .harmonic_basis import HarmonicBasis, build_monomials, orthonormalize
from .neural_net import AdamState, Mlp, adam_step, bfgs_minimize, init_glorot

__all__ = [
    "NavemModel",
    "TrainingConfig",
    "TrainingSample",
    "boundary_control_points",
    "build_dataset",
    "evaluate_boundary_accuracy",
    "exact_trace",
    "hat_boundary_targets",
    "load_model",
    "loss",
    "save_model",
    "train",
]

MODEL_FORMAT = "navem-model v1"


def exact_trace(poly: Polygon, vertex: int, point, edge_id: int | None = None):
    """Value and tangential derivative of the hat of ``vertex`` at a
    boundary point.

    The hat is one at its vertex, decays linearly to zero along the two
    incident edges and vanishes elsewhere; the tangential derivative is
    taken along the CCW edge tangent and jumps at vertices, which is why
    points sitting on a vertex need an explicit ``edge_id``.
    """
    point = np.asarray(point, dtype=float)
    n = poly.n_vertices
    tol = 1e-10 * poly.diameter

    if edge_id is None:
        candidates = []
        for e in range(n):
            t, dist = _project_to_edge(poly, e, point)
            if dist < tol:
                candidates.append((e, t))
        if not candidates:
            raise GeometryError("point does not lie on the element boundary")
        interior = [(e, t) for e, t in candidates if tol < t < 1 - tol]
        if len(candidates) > 1 and not interior:
            raise GeometryError(
                "point sits on a vertex; pass edge_id to disambiguate the "
                "tangential derivative"
            )
        edge_id, t = interior[0] if interior else candidates[0]
    else:
        t, dist = _project_to_edge(poly, edge_id, point)
        if dist >= tol:
            raise GeometryError(f"point is not on edge {edge_id}")

    length = poly.edge_lengths[edge_id]
    if edge_id == vertex:  # outgoing edge: hat goes 1 -> 0
        return 1.0 - t, -1.0 / length
    if (edge_id + 1) % n == vertex:  # incoming edge: hat goes 0 -> 1
        return t, 1.0 / length
    return 0.0, 0.0


def _project_to_edge(poly: Polygon, e: int, point):
    a = poly.vertices[e]
    b = poly.vertices[(e + 1) % poly.n_vertices]
    ab = b - a
    t = float(np.clip(np.dot(point - a, ab) / np.dot(ab, ab), 0.0, 1.0))
    dist = float(np.linalg.norm(a + t * ab - point))
    return t, dist


def boundary_control_points(poly: Polygon, points_per_edge: int):
    """Equally spaced control points per edge, endpoints included.

    Each edge contributes its own copies of both endpoints, so vertices
    appear once per incident edge with that edge's id and tangent (the
    tangential derivative jumps there). Returns ``(points, edge_ids,
    tangents)``.
    """
    if points_per_edge < 2:
        raise ValueError("need at least 2 control points per edge")
    n = poly.n_vertices
    t = np.linspace(0.0, 1.0, points_per_edge)
    pts, ids, tangents = [], [], []
    for e in range(n):
        a = poly.vertices[e]
        b = poly.vertices[(e + 1) % n]
        pts.append(a[None, :] + t[:, None] * (b - a)[None, :])
        ids.append(np.full(points_per_edge, e, dtype=int))
        tangents.append(np.repeat(poly.edge_tangents[e][None, :], points_per_edge, 0))
    return np.vstack(pts), np.concatenate(ids), np.vstack(tangents)


def hat_boundary_targets(poly: Polygon, vertex: int, edge_ids, point_params=None):
    """Vectorized hat targets for control points laid out per edge.

    ``point_params`` are the per-point edge parameters in [0, 1]; when
    omitted they are reconstructed assuming the equally-spaced layout of
    :func:`boundary_control_points`.
    """
    edge_ids = np.asarray(edge_ids)
    n = poly.n_vertices
    if point_params is None:
        per_edge = len(edge_ids) // n
        point_params = np.tile(np.linspace(0.0, 1.0, per_edge), n)
    values = np.zeros(len(edge_ids))
    tangential = np.zeros(len(edge_ids))
    outgoing = edge_ids == vertex
    incoming = (edge_ids + 1) % n == vertex
    values[outgoing] = 1.0 - point_params[outgoing]
    values[incoming] = point_params[incoming]
    tangential[outgoing] = -1.0 / poly.edge_lengths[vertex]
    tangential[incoming] = 1.0 / poly.edge_lengths[(vertex - 1) % n]
    return values, tangential


@dataclass
class TrainingSample:
    """One (vertex, polygon) pair in the canonical frame."""

    polygon_id: int
    vertex: int
    encoding: np.ndarray
    points: np.ndarray
    edge_ids: np.ndarray
    tangents: np.ndarray
    target_values: np.ndarray
    target_tangential: np.ndarray


def canonicalize_element(poly: Polygon, vertex: int, square_diameter: float):
    """Inertial plus vertex-canonical mapping of one element.

    Returns the mapped polygon (canonical vertex first), the composed
    similarity from the original element, and the network encoding.
    """
    f_inv = inertial_map(poly)
    centered = f_inv.apply_polygon(poly)
    mapped, g_inv = vertex_canonical_polygon(centered, vertex)
    check_containment(mapped, square_diameter, context=f"vertex {vertex} image")
    composed = g_inv.compose(f_inv)
    return mapped, composed, mapped.vertices[1:].ravel().copy()


def _sample_from_polygon(
    poly: Polygon, polygon_id: int, vertex: int, points_per_edge: int,
    square_diameter: float,
) -> TrainingSample:
    mapped, _, encoding = canonicalize_element(poly, vertex, square_diameter)
    points, edge_ids, tangents = boundary_control_points(mapped, points_per_edge)
    values, tangential = hat_boundary_targets(mapped, 0, edge_ids)
    return TrainingSample(
        polygon_id, vertex, encoding, points, edge_ids, tangents, values, tangential
    )


def dataset_polygons(n_vertices: int, count: int, seed: int, rho: float = 0.1):
    """Deterministic polygon set; polygon ``i`` only depends on ``(seed, i)``."""
    params = MeshAssumptionParams(rho)
    return [
        random_polygon(n_vertices, params, rng=np.random.default_rng((seed, i)))
        for i in range(count)
    ]


def build_dataset(
    n_vertices: int,
    sample_count: int,
    points_per_edge: int,
    seed: int,
    square_diameter: float = 10.0,
    rho: float = 0.1,
) -> list:
    """Training set: one sample per (polygon, vertex) pair."""
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    samples = []
    for i, poly in enumerate(dataset_polygons(n_vertices, sample_count, seed, rho)):
        for j in range(n_vertices):
            samples.append(
                _sample_from_polygon(poly, i, j, points_per_edge, square_diameter)
            )
    return samples


class _LossData:
    """Stacked arrays plus per-sample basis evaluations, fixed for a run."""

    def __init__(self, samples, basis: HarmonicBasis):
        self.encodings = np.array([s.encoding for s in samples])
        self.target_values = np.array([s.target_values for s in samples])
        self.target_tangential = np.array([s.target_tangential for s in samples])
        self.value_matrices = np.array([basis.evaluate(s.points) for s in samples])
        self.tangential_matrices = np.array(
            [basis.tangential_derivative(s.points, s.tangents) for s in samples]
        )

    @property
    def n_points(self) -> int:
        return self.target_values.size


def _least_squares_targets(data: "_LossData") -> np.ndarray:
    """Per-sample value-only least-squares coefficients, ``(n_samples, nb)``."""
    targets = np.empty((len(data.encodings), data.value_matrices.shape[2]))
    for s in range(len(targets)):
        targets[s], *_ = np.linalg.lstsq(
            data.value_matrices[s], data.target_values[s], rcond=None
        )
    return targets


def _loss_from_data(net: Mlp, data: _LossData):
    coeffs, cache = net.forward_cached(data.encodings)
    pred_values = np.einsum("smb,sb->sm", data.value_matrices, coeffs)
    pred_tangential = np.einsum("smb,sb->sm", data.tangential_matrices, coeffs)
    res_v = pred_values - data.target_values
    res_t = pred_tangential - data.target_tangential
    total = float(np.sum(res_v**2) + np.sum(res_t**4))
    grad_coeffs = 2.0 * np.einsum(
        "smb,sm->sb", data.value_matrices, res_v
    ) + 4.0 * np.einsum("smb,sm->sb", data.tangential_matrices, res_t**3)
    wg, bg, _ = net.backprop(cache, grad_coeffs)
    return total, net.flatten_like(wg, bg)


def loss(net: Mlp, basis: HarmonicBasis, samples):
    """Boundary-trace loss over a batch and its parameter gradient.

    Sum over samples and control points of the squared value mismatch plus
    the fourth power of the tangential-derivative mismatch (the exponents
    keep the two contributions at comparable magnitude).
    """
    return _loss_from_data(net, _LossData(samples, basis))


@dataclass
class TrainingConfig:
    n_vertices: int = 4
    degree: int = 5
    hidden_layers: tuple = (30, 30, 30)
    sample_count: int = 100
    points_per_edge: int = 20
    dataset_seed: int = 0
    init_seed: int = 0
    adam_epochs: int = 3000
    adam_lr0: float = 1e-3
    adam_decay: float = 0.97
    adam_decay_every: float = 100.0
    bfgs_max_iter: int = 12000
    square_diameter: float = 10.0
    lattice_n: int = 40
    rho: float = 0.1
    validation_count: int = 20
    validation_seed: int = 10_000
    divergence_threshold: float = 1e8
    # train against whitened coefficients (per-component scales estimated
    # from the least-squares targets), folded back into the output layer
    whiten_outputs: bool = True

    @property
    def layer_sizes(self) -> list:
        return [2 * (self.n_vertices - 1), *self.hidden_layers, 2 * self.degree + 1]

    def to_dict(self) -> dict:
        return {
            "n_vertices": self.n_vertices,
            "degree": self.degree,
            "hidden_layers": list(self.hidden_layers),
            "sample_count": self.sample_count,
            "points_per_edge": self.points_per_edge,
            "dataset_seed": self.dataset_seed,
            "init_seed": self.init_seed,
            "adam_epochs": self.adam_epochs,
            "adam_lr0": self.adam_lr0,
            "adam_decay": self.adam_decay,
            "adam_decay_every": self.adam_decay_every,
            "bfgs_max_iter": self.bfgs_max_iter,
            "square_diameter": self.square_diameter,
            "lattice_n": self.lattice_n,
            "rho": self.rho,
            "validation_count": self.validation_count,
            "validation_seed": self.validation_seed,
        }


@dataclass
class NavemModel:
    """Trained network bundled with the basis it was trained against."""

    n_vertices: int
    degree: int
    net: Mlp
    basis: HarmonicBasis
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.net.layer_sizes[0] != 2 * (self.n_vertices - 1):
            raise ModelMismatchError("input layer does not match the vertex count")
        if self.net.layer_sizes[-1] != 2 * self.degree + 1:
            raise ModelMismatchError("output layer does not match the degree")

    def predict_coefficients(self, encodings: np.ndarray) -> np.ndarray:
        return self.net.forward(encodings)


def train(config: TrainingConfig = TrainingConfig(), log=None):
    """Full-batch Adam followed by BFGS on the boundary-trace loss.

    Returns the trained :class:`NavemModel`; the training curve, final
    losses, optimizer status and held-out validation metrics end up in the
    model metadata.
    """
    t_start = time.perf_counter()
    basis = orthonormalize(
        build_monomials(config.degree, config.square_diameter), config.lattice_n
    )
    samples = build_dataset(
        config.n_vertices,
        config.sample_count,
        config.points_per_edge,
        config.dataset_seed,
        config.square_diameter,
        config.rho,
    )
    data = _LossData(samples, basis)
    net = init_glorot(config.layer_sizes, seed=config.init_seed)

    # the targets' coefficient scales span orders of magnitude (the basis is
    # normalized over the whole reference square, elements sit well inside
    # it); whitening the outputs keeps the regression O(1) per component
    output_scale = np.ones(2 * config.degree + 1)
    if config.whiten_outputs:
        ls_targets = _least_squares_targets(data)
        output_scale = np.maximum(np.std(ls_targets, axis=0), 1e-6)
        data.value_matrices = data.value_matrices * output_scale
        data.tangential_matrices = data.tangential_matrices * output_scale

    def check_divergence(value):
        if not np.isfinite(value) or value > config.divergence_threshold:
            raise TrainingDivergenceError(f"loss diverged to {value!r}")

    curve = []
    params = net.flatten()
    adam = AdamState(
        lr0=config.adam_lr0,
        decay=config.adam_decay,
        decay_every=config.adam_decay_every,
    )
    for epoch in range(config.adam_epochs):
        net.set_flat(params)
        value, grad = _loss_from_data(net, data)
        check_divergence(value)
        curve.append(("adam", epoch, value))
        params = adam_step(adam, params, grad)
        if log and epoch % 500 == 0:
            log(f"adam epoch {epoch}: loss {value:.6e}")

    cache = {"x": None, "f": None, "g": None}

    def fused(x):
        if cache["x"] is None or not np.array_equal(x, cache["x"]):
            net.set_flat(x)
            f, g = _loss_from_data(net, data)
            cache["x"], cache["f"], cache["g"] = x.copy(), f, g
        return cache["f"], cache["g"]

    # dense BFGS is memory-traffic bound beyond a few hundred parameters
    memory = None if net.n_parameters <= 600 else 20
    result = bfgs_minimize(
        lambda x: fused(x)[0],
        lambda x: fused(x)[1],
        params,
        max_iter=config.bfgs_max_iter,
        record_every=25,
        memory=memory,
    )
    check_divergence(result.fun)
    for it, value, gnorm in result.history:
        curve.append(("bfgs", it, value))
    curve.append(("bfgs", result.n_iterations, result.fun))
    net.set_flat(result.x)

    final_loss, _ = _loss_from_data(net, data)
    if config.whiten_outputs:
        # fold the whitening scales into the affine output layer so the
        # stored network predicts coefficients in the plain basis
        net.weights[-1] = output_scale[:, None] * net.weights[-1]
        net.biases[-1] = output_scale * net.biases[-1]
    model = NavemModel(config.n_vertices, config.degree, net, basis)
    validation = evaluate_boundary_accuracy(
        model,
        n_polygons=config.validation_count,
        seed=config.validation_seed,
        points_per_edge=config.points_per_edge,
        rho=config.rho,
    )
    model.metadata = {
        "config": config.to_dict(),
        "output_scale": output_scale.tolist(),
        "final_loss": final_loss,
        "loss_per_point": final_loss / data.n_points,
        "bfgs_status": result.status,
        "bfgs_iterations": result.n_iterations,
        "bfgs_grad_inf_norm": result.grad_inf_norm,
        "training_seconds": time.perf_counter() - t_start,
        "training_curve": [[phase, int(i), float(v)] for phase, i, v in curve],
        "validation": validation,
    }
    if log:
        log(
            f"training done in {model.metadata['training_seconds']:.1f}s: "
            f"loss {final_loss:.6e} ({result.status}), held-out value error "
            f"max {validation['value_error_max']:.3e} / "
            f"mean {validation['value_error_mean']:.3e}"
        )
    return model


def evaluate_boundary_accuracy(
    model: NavemModel,
    polygons=None,
    n_polygons: int = 20,
    seed: int = 10_000,
    points_per_edge: int = 20,
    rho: float = 0.1,
) -> dict:
    """Boundary-trace accuracy of the predicted basis functions.

    Evaluates each predicted function against the exact hat trace on dense
    boundary points of fresh (or supplied) polygons; also reports the gap
    to the per-element least-squares fit, which bounds what any network
    sharing this basis could achieve.
    """
    if polygons is None:
        polygons = dataset_polygons(model.n_vertices, n_polygons, seed, rho)
    value_errors = []
    tangential_errors = []
    ls_gaps = []
    for poly in polygons:
        for j in range(poly.n_vertices):
            mapped, _, encoding = canonicalize_element(
                poly, j, model.basis.square_diameter
            )
            points, edge_ids, tangents = boundary_control_points(
                mapped, points_per_edge
            )
            values, tangential = hat_boundary_targets(mapped, 0, edge_ids)
            vmat = model.basis.evaluate(points)
            tmat = model.basis.tangential_derivative(points, tangents)
            coeffs = model.predict_coefficients(encoding)
            value_errors.append(vmat @ coeffs - values)
            tangential_errors.append(tmat @ coeffs - tangential)
            ls_coeffs, *_ = np.linalg.lstsq(vmat, values, rcond=None)
            ls_gaps.append(vmat @ (coeffs - ls_coeffs))
    value_errors = np.abs(np.concatenate(value_errors))
    tangential_errors = np.abs(np.concatenate(tangential_errors))
    ls_gaps = np.abs(np.concatenate(ls_gaps))
    return {
        "n_polygons": len(polygons),
        "value_error_max": float(value_errors.max()),
        "value_error_mean": float(value_errors.mean()),
        "tangential_error_max": float(tangential_errors.max()),
        "tangential_error_mean": float(tangential_errors.mean()),
        "ls_gap_max": float(ls_gaps.max()),
        "ls_gap_mean": float(ls_gaps.mean()),
    }


def save_model(model: NavemModel, path):
    """Versioned JSON dump; floats round-trip exactly."""
    payload = {
        "format": MODEL_FORMAT,
        "n_vertices": model.n_vertices,
        "degree": model.degree,
        "activation": model.net.activation,
        "layer_sizes": list(model.net.layer_sizes),
        "weights": [w.tolist() for w in model.net.weights],
        "biases": [b.tolist() for b in model.net.biases],
        "basis": {
            "degree": model.basis.degree,
            "square_diameter": model.basis.square_diameter,
            "lattice_n": model.basis.lattice_n,
            "coeffs": model.basis.coeffs.tolist(),
        },
        "metadata": model.metadata,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_model(path) -> NavemModel:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format") != MODEL_FORMAT:
        raise ModelMismatchError(f"{path}: not a '{MODEL_FORMAT}' file")
    net = Mlp(
        payload["layer_sizes"],
        [np.array(w, dtype=float) for w in payload["weights"]],
        [np.array(b, dtype=float) for b in payload["biases"]],
        payload["activation"],
    )
    basis_info = payload["basis"]
    basis = HarmonicBasis(
        build_monomials(basis_info["degree"], basis_info["square_diameter"]),
        np.array(basis_info["coeffs"], dtype=float),
        basis_info["lattice_n"],
    )
    return NavemModel(
        payload["n_vertices"], payload["degree"], net, basis, payload["metadata"]
    )
