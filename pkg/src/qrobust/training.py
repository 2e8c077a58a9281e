"""Adversarial retraining of parameterized classifiers.

The training loop alternates exact verification with gradient descent:
counterexamples found by the verifier join the training set under the true
label of the state they perturb, and the cross-entropy loss is minimized by
plain gradient descent with a halving line search.  Gradients come from the
parameter-shift rule, which is exact for single-qubit rotation gates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .circuit import Circuit, Gate, Measurement, NoiseSite, QmlModel, predict_distribution
from .errors import ValidationError
from .local import NON_ROBUST, LabeledState, verify_dataset
from .qasm import BUILTIN_GATES

ROTATION_GATES = ("rx", "ry", "rz")


@dataclass(frozen=True, eq=False)
class ParamRotation:
    """A placeholder rotation whose angle is looked up by parameter name."""

    gate_name: str
    qubit: int
    param: str

    def __post_init__(self):
        if self.gate_name not in ROTATION_GATES:
            raise ValidationError(
                f"only {ROTATION_GATES} can be parameterized, got {self.gate_name!r}"
            )

    def bind(self, angle: float) -> Gate:
        factory = BUILTIN_GATES[self.gate_name][2]
        return Gate(self.gate_name, (self.qubit,), (angle,), factory(angle))


@dataclass(frozen=True, eq=False)
class ParameterizedModel:
    """A circuit template with named rotation angles plus a measurement."""

    n_qubits: int
    template: tuple
    measurement: Measurement
    theta: dict[str, float]

    def __post_init__(self):
        names = []
        for entry in self.template:
            if isinstance(entry, ParamRotation):
                if entry.param not in names:
                    names.append(entry.param)
            elif not isinstance(entry, (Gate, NoiseSite)):
                raise ValidationError(f"bad template entry {type(entry).__name__}")
        object.__setattr__(self, "theta", {k: float(v) for k, v in self.theta.items()})
        missing = [n for n in names if n not in self.theta]
        if missing:
            raise ValidationError(f"unbound parameters: {missing}")
        object.__setattr__(self, "_names", tuple(names))

    @property
    def param_names(self) -> tuple[str, ...]:
        return self._names

    def theta_vector(self) -> np.ndarray:
        return np.array([self.theta[n] for n in self.param_names], dtype=np.float64)

    def with_theta(self, theta: dict[str, float]) -> "ParameterizedModel":
        return ParameterizedModel(self.n_qubits, self.template, self.measurement, theta)

    def bind(self, shift_site: int | None = None, shift: float = 0.0) -> QmlModel:
        """Materialize the circuit; optionally shift one site's angle."""
        instructions = []
        site_no = -1
        for entry in self.template:
            if isinstance(entry, ParamRotation):
                site_no += 1
                angle = self.theta[entry.param]
                if shift_site is not None and site_no == shift_site:
                    angle += shift
                instructions.append(entry.bind(angle))
            else:
                instructions.append(entry)
        return QmlModel(Circuit(self.n_qubits, tuple(instructions)), self.measurement)


def _prob_of_label(model: QmlModel, rho, label) -> float:
    idx = model.measurement.label_index(label)
    return float(predict_distribution(model, rho)[idx])


def param_shift_grad(pmodel: ParameterizedModel, rho, label) -> np.ndarray:
    """d p_label / d theta by the parameter-shift rule.

    Each rotation site contributes (p(+pi/2) - p(-pi/2)) / 2; sites sharing a
    parameter name sum their contributions.
    """
    sites = [e for e in pmodel.template if isinstance(e, ParamRotation)]
    grad = {name: 0.0 for name in pmodel.param_names}
    for site_no, site in enumerate(sites):
        plus = _prob_of_label(pmodel.bind(site_no, math.pi / 2), rho, label)
        minus = _prob_of_label(pmodel.bind(site_no, -math.pi / 2), rho, label)
        grad[site.param] += 0.5 * (plus - minus)
    return np.array([grad[n] for n in pmodel.param_names], dtype=np.float64)


def _loss_and_grad(pmodel: ParameterizedModel, data: list[LabeledState]):
    model = pmodel.bind()
    losses = []
    grad = np.zeros(len(pmodel.param_names))
    for x in data:
        p = max(_prob_of_label(model, x.state, x.label), 1e-12)
        losses.append(-math.log(p))
        grad += -param_shift_grad(pmodel, x.state, x.label) / p
    return float(np.mean(losses)), grad / len(data)


def _loss_only(pmodel: ParameterizedModel, data: list[LabeledState]) -> float:
    model = pmodel.bind()
    return float(
        np.mean([-math.log(max(_prob_of_label(model, x.state, x.label), 1e-12)) for x in data])
    )


def adversarial_train(pmodel: ParameterizedModel, data: list[LabeledState], eps: float,
                      epochs: int = 5, lr: float = 0.05, seed: int = 0):
    """Retraining loop: verify, absorb counterexamples, descend.

    Per epoch: exact verification of the original dataset; every adversarial
    state joins the training pool labeled with the true label of the state it
    perturbs; one gradient-descent step (halving line search, never uphill)
    on the cross-entropy over the pool.  Stops early when the dataset
    verifies fully robust with nothing to absorb.  Deterministic: nothing
    here draws randomness, the seed is recorded for the report only.

    Returns (trained model, history) where history rows carry
    (epoch, loss, rough_ra, accurate_ra, counterexamples_added).
    """
    if not data:
        raise ValidationError("empty training dataset")
    if lr <= 0:
        raise ValidationError("learning rate must be positive")
    pool = list(data)
    history: list[dict] = []
    current = pmodel
    for epoch in range(1, epochs + 1):
        model = current.bind()
        theta_before = dict(current.theta)
        rough = verify_dataset(model, data, eps, mode="rough")
        accurate = verify_dataset(model, data, eps, mode="accurate")
        added_pairs = []
        for i, (x, verdict) in enumerate(zip(data, accurate.verdicts)):
            if verdict.status == NON_ROBUST:
                recycled = LabeledState(verdict.counterexample.state, x.label)
                pool.append(recycled)
                added_pairs.append((i, recycled))
        added = len(added_pairs)

        if added == 0 and accurate.robust_accuracy == 100.0:
            history.append(
                {
                    "epoch": epoch,
                    "loss": _loss_only(current, pool),
                    "rough_ra": rough.robust_accuracy,
                    "accurate_ra": accurate.robust_accuracy,
                    "counterexamples_added": 0,
                    "theta_before": theta_before,
                    "added_pairs": [],
                }
            )
            break

        loss_before, grad = _loss_and_grad(current, pool)
        step = lr
        candidate = current
        loss_after = loss_before
        theta = current.theta_vector()
        for _ in range(30):
            trial_vec = theta - step * grad
            trial = current.with_theta(dict(zip(current.param_names, trial_vec)))
            trial_loss = _loss_only(trial, pool)
            if trial_loss <= loss_before:
                candidate, loss_after = trial, trial_loss
                break
            step /= 2.0
        current = candidate
        history.append(
            {
                "epoch": epoch,
                "loss": loss_after,
                "rough_ra": rough.robust_accuracy,
                "accurate_ra": accurate.robust_accuracy,
                "counterexamples_added": added,
                "theta_before": theta_before,
                "added_pairs": added_pairs,
            }
        )
    return current, history


def history_to_csv(history: list[dict]) -> str:
    lines = ["epoch,loss,rough_ra,accurate_ra,counterexamples_added"]
    for row in history:
        lines.append(
            f"{row['epoch']},{row['loss']!r},{row['rough_ra']!r},"
            f"{row['accurate_ra']!r},{row['counterexamples_added']}"
        )
    return "\n".join(lines) + "\n"
