"""
Ablation study
---------
Trains and evaluates each requested variant with the same seed and split on
every dataset, and renders an OA / Kappa table with one row per variant and
one column pair per dataset.
"""
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence

from sqlalchemy.orm import Session

from .data_persistence import repo, schemas
from .dataset_io import Dataset
from .log_config import LOGGER
from .schemas import MetricsReport, RunConfig, canonical_variant
from .training import evaluate, fit_dataset


@dataclass
class AblationRow:
    variant: str
    dataset: str
    report: MetricsReport
    params: int
    epochs: int
    best_epoch: int


def ablate(
    run_config: RunConfig,
    variants: Sequence[str],
    datasets: Mapping[str, Dataset],
    session: Optional[Session] = None,
) -> List[AblationRow]:
    """
    Train and evaluate every variant on every dataset.

    Evaluation uses the test split, or the validation split when the split
    recipe leaves no test samples. With a session each row is also stored in
    the run registry.

    Raises:
        ConfigurationError: an unknown variant name (checked before any training).
    """
    names = [canonical_variant(variant) for variant in variants]
    rows = []
    for dataset_name, dataset in datasets.items():
        for variant in names:
            LOGGER.info("Ablation: training %s on %s", variant, dataset_name)
            model, result, indices = fit_dataset(run_config, dataset, variant)
            held_out = indices.test if len(indices.test) else indices.val
            report = evaluate(
                model,
                dataset.cubes,
                dataset.labels,
                held_out,
                run_config.train.batch_size,
                run_config.threads,
                dataset.class_names,
            )
            row = AblationRow(
                variant=variant,
                dataset=dataset_name,
                report=report,
                params=model.num_parameters(),
                epochs=len(result.history),
                best_epoch=result.best_epoch,
            )
            rows.append(row)
            if session is not None:
                repo.add_run(
                    session,
                    schemas.ExperimentRunCreate(
                        variant=variant,
                        dataset=dataset_name,
                        oa=report.oa,
                        aa=report.aa,
                        kappa=report.kappa,
                        params=row.params,
                        seed=run_config.model.seed,
                        epochs=row.epochs,
                        best_epoch=row.best_epoch,
                    ),
                )
    return rows


def format_ablation_table(rows: Sequence[AblationRow]) -> str:
    """Variants as rows, `<dataset> OA` / `<dataset> Kappa` column pairs"""
    datasets: List[str] = []
    table: Dict[str, Dict[str, AblationRow]] = {}
    for row in rows:
        if row.dataset not in datasets:
            datasets.append(row.dataset)
        table.setdefault(row.variant, {})[row.dataset] = row

    width = max([len("Variant")] + [len(variant) for variant in table])
    header = f"{'Variant':<{width}}"
    for dataset in datasets:
        header += f"  {dataset} OA(%)  {dataset} Kappa(%)"
    lines = [header]
    for variant, by_dataset in table.items():
        line = f"{variant:<{width}}"
        for dataset in datasets:
            row = by_dataset.get(dataset)
            oa = f"{row.report.oa:.2f}" if row else "-"
            kappa = f"{row.report.kappa:.2f}" if row else "-"
            line += f"  {oa:>{len(dataset) + 6}}  {kappa:>{len(dataset) + 9}}"
        lines.append(line)
    return "\n".join(lines)
