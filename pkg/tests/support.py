"""Shared helpers for the test suite."""
import numpy as np

from toothsparse.correspondence import centroid_alignment
from toothsparse.dictionary import build_dictionary_set
from toothsparse.evaluation import EvalSubject
from toothsparse.geometry import RigidTransform, apply_transform
from toothsparse.teeth import ALL_LABELS


def random_rotation(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def random_rigid(rng, scale=10.0):
    return RigidTransform(random_rotation(rng), rng.normal(scale=scale, size=3))


def rot_z(deg):
    c, s = np.cos(np.radians(deg)), np.sin(np.radians(deg))
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def bent_grid():
    """A flat 20 x 20 unit grid and the same grid bent to ``z = sin(x / 5)``, index-matched."""
    g = np.arange(20.0)
    x, y = np.meshgrid(g, g, indexing="ij")
    flat = np.column_stack([x.ravel(), y.ravel(), np.zeros(x.size)])
    bent = flat.copy()
    bent[:, 2] = np.sin(bent[:, 0] / 5.0)
    return flat, bent


def truth_in_template_frame(subject, template):
    """Ground-truth clouds of a synthetic subject, aligned on all 28 centroids."""
    t = centroid_alignment(subject.truth, template.teeth, ALL_LABELS)
    return {lab: apply_transform(t, subject.truth[lab]) for lab in ALL_LABELS}


def truth_dictionaries(subjects, template):
    return build_dictionary_set(
        [(s.model.subject_id, truth_in_template_frame(s, template)) for s in subjects])


def eval_subjects(subjects):
    return [EvalSubject(s.model, s.truth) for s in subjects]


def lp_min_l1(D, a):
    """Exact optimum of ``min |C|_1 s.t. D C = a`` by linear programming.

    ``C = p - q`` with ``p, q >= 0`` turns the problem into
    ``min 1^T [p; q] s.t. [D, -D] [p; q] = a``.
    """
    from scipy.optimize import linprog

    m, n = D.shape
    res = linprog(np.ones(2 * n), A_eq=np.hstack([D, -D]), b_eq=a, bounds=[(0, None)] * (2 * n),
                  method="highs", options={"primal_feasibility_tolerance": 1e-10,
                                           "dual_feasibility_tolerance": 1e-10})
    assert res.status == 0, res.message
    return float(res.fun), res.x[:n] - res.x[n:]


def random_bpdn_instances(rng, count, max_m=12, max_n=25):
    """Random dense instances with m <= max_m rows and m <= N <= max_n columns."""
    out = []
    for _ in range(count):
        m = int(rng.integers(1, max_m + 1))
        n = int(rng.integers(m, max_n + 1))
        out.append((rng.normal(size=(m, n)), rng.normal(size=m)))
    return out


ACCEPTANCE_LINES = []


def record_criterion(number, passed, detail):
    """Remember one acceptance verdict line; the terminal summary prints them all."""
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed
