# export_utils.py
import csv
from datetime import datetime, timezone
from importlib import metadata
import json
import logging
import os

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

TRACKED_PACKAGES = ('numpy', 'scipy', 'pandas', 'pydantic', 'click', 'joblib', 'rich', 'python-dotenv')


def _jsonable(value):
    """Приведение numpy-типов и массивов к тому, что понимает json."""
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if hasattr(value, 'to_dict'):
        return value.to_dict()
    raise TypeError(f'не сериализуется в JSON: {type(value).__name__}')


def _clean(value):
    # json пишет inf/nan как невалидные токены: заменяем строками
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, (float, np.floating)) and not np.isfinite(value):
        return str(float(value))
    return value


def _cell(value):
    if isinstance(value, (list, tuple, np.ndarray)):
        return json.dumps(_clean(np.asarray(value).tolist()))
    return value


def write_table(frame: pd.DataFrame, path: str) -> str:
    """CSV с заголовком, минимальные кавычки RFC-4180, CRLF; float с полной точностью."""
    out = frame.copy()
    for col in out.columns:
        if out[col].dtype == object:
            out[col] = out[col].map(_cell)
    out.to_csv(path, index=False, quoting=csv.QUOTE_MINIMAL, lineterminator='\r\n',
               float_format='%.17g', encoding='utf-8')
    logger.info('таблица: %s (%d строк)', path, len(out))
    return path


def write_json(record, path: str) -> str:
    with open(path, 'w', encoding='utf-8') as fh:
        json.dump(_clean(record), fh, ensure_ascii=False, indent=2, default=_jsonable)
        fh.write('\n')
    return path


def package_versions() -> dict:
    versions = {}
    for name in TRACKED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = None
    return versions


def build_manifest(config: dict, seed: int, wall_time: float, files: list, workers: int) -> dict:
    return {
        'config': config,
        'seed': seed,
        'workers': workers,
        'versions': package_versions(),
        'wall_time_s': round(wall_time, 3),
        'finished_utc': datetime.now(timezone.utc).isoformat(timespec='seconds'),
        'files': [os.path.basename(f) for f in files],
    }


def write_run(result, config: dict, prefix: str, seed: int, wall_time: float, workers: int) -> list:
    """
    Таблицы → <prefix>_<имя>.csv, сводка → <prefix>_summary.json,
    манифест → <prefix>_manifest.json. Возвращает список путей.
    """
    folder = os.path.dirname(prefix)
    if folder:
        os.makedirs(folder, exist_ok=True)
    files = [write_table(frame, f'{prefix}_{name}.csv') for name, frame in result.tables.items()]
    files.append(write_json(result.summary, f'{prefix}_summary.json'))
    manifest_path = f'{prefix}_manifest.json'
    write_json(build_manifest(config, seed, wall_time, files, workers), manifest_path)
    files.append(manifest_path)
    return files
