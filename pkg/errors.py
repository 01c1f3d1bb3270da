# errors.py
"""
Иерархия ошибок лаборатории.

У каждой категории свой код выхода CLI:
  2: конфигурация/домен аргументов,
  3: численный отказ по политике (t > T_δ, ρ ≥ 1, переполнение),
  4: квадратура не сошлась или исчерпан бюджет.
"""


class LabError(RuntimeError):
    """Базовая ошибка katolab."""
    exit_code = 1


class ConfigInvalid(LabError):
    """Конфиг эксперимента не прошёл валидацию."""
    exit_code = 2


class DomainError(LabError, ValueError):
    """Аргумент вне области определения операции."""
    exit_code = 2


class NumericalRefusal(LabError):
    """Отказ считать: нарушено условие сжатия ряда или грозит переполнение."""
    exit_code = 3

    def __init__(self, message: str, value: float | None = None):
        super().__init__(message)
        self.value = value


class QuadratureError(LabError):
    """Квадратура не сошлась; residual: оценка невязки."""
    exit_code = 4

    def __init__(self, message: str, residual: float = float('nan')):
        super().__init__(f'{message} (невязка {residual:.3e})')
        self.residual = residual


class BudgetExhausted(LabError):
    """Исчерпан бюджет Монте-Карло или число членов ряда."""
    exit_code = 4
