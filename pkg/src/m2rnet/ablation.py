"""Train and score a list of ablation schemes into one table."""

from __future__ import annotations

import csv
import dataclasses
from importlib import resources

from .config import AblationScheme, TrainConfig, scheme as numbered_scheme
from .errors import ContractError
from .metrics import METRIC_NAMES, MetricsReport, mean_report
from .training import evaluate_model, train

ABLATION_SCHEMA = "m2rnet-ablation/1"
FIELDS = ("scheme",) + AblationScheme.FLAGS + METRIC_NAMES


@dataclasses.dataclass
class AblationRow:
    scheme: int
    flags: AblationScheme
    report: MetricsReport
    per_seed: list

    def as_dict(self) -> dict:
        row = {"scheme": self.scheme}
        row.update({k: int(v) for k, v in self.flags.flags().items()})
        row.update(self.report.scores())
        return row


def run_scheme(number: int, config: TrainConfig, train_set, test_set, seeds=None, verbose=False) -> AblationRow:
    flags = numbered_scheme(number)
    reports = []
    for seed in seeds if seeds is not None else (config.seed,):
        cfg = dataclasses.replace(config, scheme=flags, seed=seed)
        model, _ = train(cfg, train_set)
        reports.append(evaluate_model(model, test_set))
        if verbose:
            print(f"scheme {number:2d} seed {seed}: mae {reports[-1].mae:.4f}  f_max {reports[-1].f_max:.4f}")
    return AblationRow(number, flags, mean_report(reports), reports)


def ablate(schemes, config: TrainConfig, dataset, seeds=None, verbose=False) -> list:
    """Train every numbered scheme on ``dataset = (train, test)``; returns AblationRows.

    All schemes share each seed, so they start from the same initial
    weights for the components they have in common.
    """
    schemes = list(schemes)
    if not schemes:
        raise ContractError("ablate needs at least one scheme")
    train_set, test_set = dataset
    return [run_scheme(n, config, train_set, test_set, seeds, verbose) for n in schemes]


def write_table(rows, path):
    with open(path, "w", newline="") as fh:
        fh.write(f"# {ABLATION_SCHEMA}\n")
        writer = csv.DictWriter(fh, fieldnames=FIELDS)
        writer.writeheader()
        for row in rows:
            d = row.as_dict() if isinstance(row, AblationRow) else row
            writer.writerow({k: repr(float(v)) if k in METRIC_NAMES else v for k, v in d.items()})


def read_table(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    out = []
    for row in rows:
        parsed = {"scheme": int(row["scheme"])}
        parsed.update({k: int(row[k]) for k in AblationScheme.FLAGS})
        parsed.update({k: float(row[k]) for k in METRIC_NAMES})
        out.append(parsed)
    return out


def reference_path(name: str = "table2_ablation.csv"):
    """Path of a shipped reference CSV (``table2_ablation.csv`` or ``table1_benchmarks.csv``)."""
    return resources.files("m2rnet") / "reference" / name


def reference_table() -> list:
    """Published ablation values; for format comparison only, not a reproduction target."""
    with resources.as_file(reference_path()) as path:
        return read_table(path)
