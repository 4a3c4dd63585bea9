"""
Сохранение и загрузка связанного набора.

Каталог набора:
    X.csv, N.csv      отбивающие × питчеры, пропуски пустые
    Y.csv             показатели питчеров × питчеры
    Z.csv             отбивающие × показатели отбивающих
    Y_trials.csv,     только для биномиальных Y или Z
    Z_trials.csv
    dataset.json      размеры и семейства блоков
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from matchup_hub.core.exceptions import StorageError
from matchup_hub.core.expfam import DistributionSpec, Family
from matchup_hub.core.models import LinkedDataset
from matchup_hub.infra.storage import ArtifactStore

METADATA_FILE = "dataset.json"


def _spec_from_dict(data: dict, trials: np.ndarray | None) -> DistributionSpec:
    family = Family(data["family"])
    if family is Family.BINOMIAL:
        if trials is None:
            raise StorageError("Для биномиального блока нет матрицы испытаний")
        return DistributionSpec.binomial(trials)
    if family is Family.POISSON:
        return DistributionSpec.poisson()
    return DistributionSpec.normal(float(data.get("dispersion", 1.0)))


def save_dataset(dataset: LinkedDataset, directory: str | Path) -> Path:
    """
    Сохранить набор в каталог.

    Args:
        dataset: Связанный набор
        directory: Каталог (создаётся при необходимости)

    Returns:
        Путь к каталогу
    """
    store = ArtifactStore(directory)
    m1, n1, m2, n2 = dataset.dims
    rows = dataset.row_labels or tuple(str(i) for i in range(m1))
    cols = dataset.col_labels or tuple(str(j) for j in range(n1))
    y_rows = dataset.y_labels or tuple(f"y{i}" for i in range(m2))
    z_cols = dataset.z_labels or tuple(f"z{j}" for j in range(n2))

    hidden = ~dataset.mask
    X = np.where(hidden, np.nan, dataset.X)
    store.write_matrix("X.csv", X, rows, cols, index_name="batter_id")
    if dataset.x_is_binomial:
        N = np.where(hidden, np.nan, dataset.N)
        store.write_matrix("N.csv", N, rows, cols, index_name="batter_id")
    store.write_matrix("Y.csv", dataset.Y, y_rows, cols, index_name="stat")
    store.write_matrix("Z.csv", dataset.Z, rows, z_cols, index_name="batter_id")

    for name, spec, block_rows, block_cols in (
        ("Y", dataset.spec_Y, y_rows, cols),
        ("Z", dataset.spec_Z, rows, z_cols),
    ):
        if spec.family is Family.BINOMIAL:
            store.write_matrix(f"{name}_trials.csv", spec.trials, block_rows, block_cols)

    store.write_json(
        METADATA_FILE,
        {
            "dims": {"m1": m1, "n1": n1, "m2": m2, "n2": n2},
            "observed": int(dataset.mask.sum()),
            "labels": {
                "rows": dataset.row_labels is not None,
                "cols": dataset.col_labels is not None,
                "y": dataset.y_labels is not None,
                "z": dataset.z_labels is not None,
            },
            "specs": {
                "X": dataset.spec_X.to_dict(),
                "Y": dataset.spec_Y.to_dict(),
                "Z": dataset.spec_Z.to_dict(),
            },
        },
    )
    return store.root


def load_dataset(directory: str | Path) -> LinkedDataset:
    """
    Загрузить набор, сохранённый save_dataset.

    Raises:
        StorageError: Если файлы отсутствуют или не согласованы
    """
    store = ArtifactStore(directory)
    if not store.exists(METADATA_FILE):
        raise StorageError(f"В {store.root} нет {METADATA_FILE}")
    meta = store.read_json(METADATA_FILE)
    specs = meta["specs"]
    has_labels = meta.get("labels", {})

    X, rows, cols = store.read_matrix("X.csv")
    Y, y_rows, _ = store.read_matrix("Y.csv")
    Z, _, z_cols = store.read_matrix("Z.csv")
    mask = np.isfinite(X)

    N = None
    if Family(specs["X"]["family"]) is Family.BINOMIAL:
        N, _, _ = store.read_matrix("N.csv")

    trials = {}
    for name in ("Y", "Z"):
        if Family(specs[name]["family"]) is Family.BINOMIAL:
            trials[name] = store.read_matrix(f"{name}_trials.csv")[0]

    spec_X = None if N is not None else _spec_from_dict(specs["X"], None)
    return LinkedDataset(
        X=X,
        Y=Y,
        Z=Z,
        N=N,
        mask=mask,
        spec_X=spec_X,
        spec_Y=_spec_from_dict(specs["Y"], trials.get("Y")),
        spec_Z=_spec_from_dict(specs["Z"], trials.get("Z")),
        row_labels=rows if has_labels.get("rows", True) else None,
        col_labels=cols if has_labels.get("cols", True) else None,
        y_labels=y_rows if has_labels.get("y", True) else None,
        z_labels=z_cols if has_labels.get("z", True) else None,
    )
