# cli.py
"""
katolab: запуск экспериментов из JSON-конфигов.

    python cli.py run config.json
    python cli.py run --preset constant-drift-oracle
    python cli.py presets
    python cli.py validate config.json
"""
import logging
import os
import time

import click
from rich.console import Console
from rich.table import Table

from app import create_app
from errors import LabError
from export_utils import write_run
from forms import ExperimentConfig, load_config, parse_config
from presets import list_presets, preset_config
from views import RunResult, registry

logger = logging.getLogger(__name__)


def run_config(config: ExperimentConfig, output_prefix: str, workers: int) -> tuple[RunResult, list]:
    """Одна операция run: расчёт, таблицы, сводка и манифест на диск."""
    started = time.perf_counter()
    result = registry.dispatch(config, workers)
    wall = time.perf_counter() - started
    files = write_run(result, config.model_dump(mode='json'), output_prefix, config.seed, wall, workers)
    logger.info('готово за %.1f с: %s', wall, output_prefix)
    return result, files


@click.group()
@click.option('--workers', type=click.IntRange(min=1), default=None,
              help='Число воркеров (по умолчанию KATOLAB_WORKERS или число CPU).')
@click.option('--output', 'output_dir', type=click.Path(file_okay=False), default=None,
              help='Каталог результатов (по умолчанию KATOLAB_OUTPUT_DIR).')
@click.option('--log-level', default=None, help='Уровень логирования.')
@click.pass_context
def cli(ctx, workers, output_dir, log_level):
    ctx.obj = create_app({
        'KATOLAB_WORKERS': workers,
        'KATOLAB_OUTPUT_DIR': output_dir,
        'KATOLAB_LOG_LEVEL': log_level,
    })


@cli.command()
@click.argument('config_file', required=False, type=click.Path(exists=True, dir_okay=False))
@click.option('--preset', 'preset_name', default=None, help='Имя встроенного пресета вместо файла.')
@click.option('--seed', type=click.IntRange(min=0), default=None, help='Переопределить seed.')
@click.pass_context
def run(ctx, config_file, preset_name, seed):
    """Выполнить эксперимент из CONFIG_FILE или пресета."""
    app = ctx.obj
    if bool(config_file) == bool(preset_name):
        click.echo('укажите ровно одно: CONFIG_FILE или --preset', err=True)
        ctx.exit(2)
    try:
        if preset_name:
            config = parse_config(preset_config(preset_name, seed))
            stem = preset_name
        else:
            config = load_config(config_file)
            if seed is not None:
                config = parse_config({**config.model_dump(mode='json'), 'seed': seed})
            stem = os.path.splitext(os.path.basename(config_file))[0]
        prefix = config.output or os.path.join(app.output_dir, stem)
        _, files = run_config(config, prefix, app.workers)
    except LabError as exc:
        logger.error('%s: %s', type(exc).__name__, exc)
        ctx.exit(exc.exit_code)
    for path in files:
        click.echo(path)


@cli.command()
def presets():
    """Список встроенных пресетов воспроизведения."""
    table = Table(title='katolab presets')
    table.add_column('name', style='bold')
    table.add_column('criterion', justify='right')
    table.add_column('experiment')
    table.add_column('description')
    for entry in list_presets():
        criterion = '—' if entry['criterion'] is None else str(entry['criterion'])
        table.add_row(entry['name'], criterion, entry['experiment'], entry['description'])
    Console(width=160).print(table)


@cli.command()
@click.argument('config_file', type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def validate(ctx, config_file):
    """Проверить конфиг без запуска расчёта."""
    try:
        config = load_config(config_file)
    except LabError as exc:
        click.echo(str(exc), err=True)
        ctx.exit(exc.exit_code)
    click.echo(f'ok: {config.experiment}/{config.params.operation}')


if __name__ == '__main__':
    cli()
