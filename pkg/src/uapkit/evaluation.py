"""Attack evaluation: success rates, perturbation-rate ratio, sweeps.

The perturbation rate zeta is the L2 norm of the perturbation over the
mean L2 image norm of the evaluation set, as a percentage; it is the
scale-free knob used to parameterize experiments.
"""

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .attack import (
    GENERATOR_RANDOM,
    GENERATOR_TARGETED,
    AttackConfig,
    generate_targeted_uap,
    random_uap,
)
from .fileio import atomic_write_text
from .tensor import lp_norm
from .validation import check_image_batch, norm_type_str

CSV_HEADER = "generator,set,target_class,p,xi,zeta_pct,r_ts,n_images,seed"


@dataclass
class EvalReport:
    """One evaluation cell: a perturbation measured on one image set."""

    generator: str
    set_label: str  # "input" or "test"
    target_class: int
    p: object
    xi: float
    zeta_pct: float
    r_ts: float
    n_images: int
    seed: int
    confusion: dict = field(default_factory=dict)  # (source, predicted) -> count
    out_of_range_pixels: int = 0

    def csv_row(self):
        return (
            f"{self.generator},{self.set_label},{self.target_class},"
            f"{norm_type_str(self.p)},{self.xi!r},{self.zeta_pct:.2f},"
            f"{self.r_ts!r},{self.n_images},{self.seed}"
        )


def success_rate(network, images, rho, target_class):
    """Fraction of images classified into the target after adding rho."""
    images = check_image_batch(images, network.input_shape)
    preds = network.predict_batch(images + np.asarray(rho))
    return float(np.mean(preds == int(target_class)))


def mean_image_norm(images):
    """Mean L2 norm of the images in a set."""
    images = check_image_batch(images)
    flat = images.reshape(images.shape[0], -1)
    return float(np.mean(np.sqrt(np.sum(flat * flat, axis=1))))


def zeta(rho, images):
    """Perturbation rate: 100 * ||rho||_2 / mean image L2 norm."""
    return 100.0 * lp_norm(rho, 2) / mean_image_norm(images)


def xi_for_zeta(target_zeta, images):
    """Budget xi so that a rho with ||rho||_2 == xi has the given zeta."""
    if target_zeta <= 0:
        raise ValueError("target zeta must be positive")
    return (target_zeta / 100.0) * mean_image_norm(images)


def check_disjoint(input_set, test_set):
    """Verify input/test disjointness via retained source indices."""
    a, b = input_set.source_indices, test_set.source_indices
    if a is None or b is None:
        raise ValueError(
            "input/test sets lack index provenance; use split_balanced"
        )
    overlap = np.intersect1d(a, b)
    if overlap.size:
        raise ValueError(
            f"input and test sets overlap at source indices {overlap[:5].tolist()}"
        )


def evaluate(network, dataset, perturbation, target_class, set_label, seed=0):
    """Full evaluation of one perturbation on one labeled image set."""
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty image set")
    images = check_image_batch(dataset.images, network.input_shape)
    rho = np.asarray(perturbation.rho)
    perturbed = images + rho
    preds = network.predict_batch(perturbed)
    r_ts = float(np.mean(preds == int(target_class)))
    confusion = {}
    for src, pred in zip(dataset.labels.tolist(), preds.tolist()):
        confusion[(src, pred)] = confusion.get((src, pred), 0) + 1
    out_of_range = int(np.sum((perturbed < 0.0) | (perturbed > 1.0)))
    return EvalReport(
        generator=perturbation.generator,
        set_label=set_label,
        target_class=int(target_class),
        p=perturbation.p,
        xi=float(perturbation.xi),
        zeta_pct=zeta(rho, images),
        r_ts=r_ts,
        n_images=len(dataset),
        seed=int(seed),
        confusion=confusion,
        out_of_range_pixels=out_of_range,
    )


def sweep(network, input_set, test_set, target_class, zeta_grid, base_config):
    """Fig-1-shaped grid: targeted and random UAPs at each zeta value.

    For every zeta in the (ascending, non-empty) grid, derives xi from
    the input set, fits a targeted UAP and draws a random-sphere control,
    then evaluates both on the input and test sets: four report rows per
    grid point.
    """
    zeta_grid = list(zeta_grid)
    if not zeta_grid:
        raise ValueError("zeta grid must be non-empty")
    if sorted(zeta_grid) != zeta_grid:
        raise ValueError("zeta grid must be ascending")
    check_disjoint(input_set, test_set)
    reports = []
    for z in zeta_grid:
        xi = xi_for_zeta(z, input_set.images)
        cfg = AttackConfig(
            target_class=target_class, epsilon=base_config.epsilon, xi=xi,
            p=base_config.p, max_epochs=base_config.max_epochs,
            seed=base_config.seed,
        )
        targeted, _ = generate_targeted_uap(network, input_set.images, cfg)
        control = random_uap(network.input_shape, cfg.p, xi, cfg.seed)
        for pert in (targeted, control):
            for ds, label in ((input_set, "input"), (test_set, "test")):
                reports.append(
                    evaluate(network, ds, pert, target_class, label, seed=cfg.seed)
                )
    return reports


def reports_to_csv(reports):
    """Render reports as the canonical CSV (UTF-8, LF, '.' decimals)."""
    lines = [CSV_HEADER]
    lines.extend(r.csv_row() for r in reports)
    return "\n".join(lines) + "\n"


def write_csv(reports, path):
    atomic_write_text(path, reports_to_csv(reports))


def confusion_csv(report):
    """Secondary CSV block for per-class confusion counts."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["source_class", "predicted_class", "count"])
    for (src, pred) in sorted(report.confusion):
        writer.writerow([src, pred, report.confusion[(src, pred)]])
    return buf.getvalue()
