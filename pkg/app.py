# app.py
import os
from dataclasses import dataclass, field

from dotenv import load_dotenv

from extensions import init_cache, init_logging, set_workers


@dataclass
class LabApp:
    """Контекст запуска: конфиг из окружения плюс инициализированные расширения."""
    config: dict = field(default_factory=dict)

    @property
    def output_dir(self) -> str:
        return self.config['KATOLAB_OUTPUT_DIR']

    @property
    def workers(self) -> int:
        return self.config['KATOLAB_WORKERS']


def create_app(overrides: dict | None = None) -> LabApp:
    load_dotenv()
    app = LabApp()

    # Настройки из окружения
    app.config['KATOLAB_OUTPUT_DIR'] = os.getenv('KATOLAB_OUTPUT_DIR', os.path.join(os.getcwd(), 'results'))
    app.config['KATOLAB_WORKERS'] = int(os.getenv('KATOLAB_WORKERS') or os.cpu_count() or 1)
    app.config['KATOLAB_CACHE_DIR'] = os.getenv('KATOLAB_CACHE_DIR') or None
    app.config['KATOLAB_LOG_LEVEL'] = os.getenv('KATOLAB_LOG_LEVEL', 'INFO')

    # явные параметры (флаги CLI, тесты) важнее окружения
    for key, value in (overrides or {}).items():
        if value is not None:
            app.config[key] = value

    # Инициализация расширений
    init_logging(app.config['KATOLAB_LOG_LEVEL'])
    init_cache(app.config['KATOLAB_CACHE_DIR'])
    set_workers(app.config['KATOLAB_WORKERS'])

    return app
