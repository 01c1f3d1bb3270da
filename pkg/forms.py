# forms.py
"""
Схемы конфигов экспериментов (pydantic). Неизвестные ключи отклоняются,
всё проверяется до начала вычислений.
"""
import json
from typing import Annotated, Any, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, ValidationError, model_validator

from errors import ConfigInvalid
from measures import DriftMeasure, SignedMeasure, build_drift, build_measure
from models import PiecewiseLinearPath
from parametrix import SeriesConfig
from simulate import SdeConfig

SCHEMA_VERSION = '1'
EXPERIMENTS = ('kato', 'kernel-checks', 'series', 'simulate', 'moments', 'varadhan', 'ldp')

Point = list[float]


class StrictModel(BaseModel):
    model_config = ConfigDict(extra='forbid')


# -------- Меры --------

class DensitySpec(StrictModel):
    kind: Literal['density']
    family: Literal['constant', 'zero', 'gaussian_bump', 'linear', 'power_singular']
    value: float | None = None
    center: Point | None = None
    sigma: float | None = Field(default=None, gt=0)
    height: float | None = None
    coef: Point | None = None
    offset: float | None = None
    half_width: float | None = Field(default=None, gt=0)
    beta: float | None = Field(default=None, ge=0)
    radius: float | None = Field(default=None, gt=0)

    @model_validator(mode='after')
    def check_family(self):
        required = {
            'gaussian_bump': ('center', 'sigma'),
            'linear': ('coef',),
            'power_singular': ('center', 'beta'),
        }.get(self.family, ())
        missing = [name for name in required if getattr(self, name) is None]
        if missing:
            raise ValueError(f'для семейства {self.family!r} не заданы поля {missing}')
        return self


class CantorSpec(StrictModel):
    kind: Literal['cantor_product']
    axis: int = Field(default=0, ge=0)
    weight: float = 1.0
    lo: float = 0.0
    hi: float = 1.0


class HyperplaneSpec(StrictModel):
    kind: Literal['hyperplane']
    axis: int = Field(default=0, ge=0)
    position: float = 0.5
    weight: float = 1.0
    lo: float = 0.0
    hi: float = 1.0


class SumTerm(StrictModel):
    coefficient: float
    measure: 'MeasureSpec'


class SumSpec(StrictModel):
    kind: Literal['sum']
    terms: list[SumTerm] = Field(min_length=1)


MeasureSpec = Annotated[Union[DensitySpec, CantorSpec, HyperplaneSpec, SumSpec], Field(discriminator='kind')]
SumTerm.model_rebuild()


def measure_from_spec(spec, d: int) -> SignedMeasure:
    return build_measure(spec.model_dump(exclude_none=True), d)


# -------- Снос --------

class DriftSpec(StrictModel):
    dimension: int = Field(ge=1)
    kind: Literal['zero', 'constant', 'ou', 'bump', 'components'] = 'zero'
    vector: Point | None = None
    gamma: float | None = None
    half_width: float | None = Field(default=None, gt=0)
    center: Point | None = None
    sigma: float | None = Field(default=None, gt=0)
    height: float | None = None
    direction: Point | None = None
    components: list[MeasureSpec] | None = None

    @model_validator(mode='after')
    def check_kind(self):
        required = {
            'constant': ('vector',),
            'ou': ('gamma',),
            'bump': ('center', 'sigma', 'height', 'direction'),
            'components': ('components',),
        }.get(self.kind, ())
        missing = [name for name in required if getattr(self, name) is None]
        if missing:
            raise ValueError(f'для сноса {self.kind!r} не заданы поля {missing}')
        for name in ('vector', 'center', 'direction', 'components'):
            value = getattr(self, name)
            if value is not None and len(value) != self.dimension:
                raise ValueError(f'{name}: длина {len(value)} ≠ dimension {self.dimension}')
        return self

    def build(self) -> DriftMeasure:
        return build_drift(self.model_dump(exclude_none=True))


# -------- Численные параметры --------

class SeriesParams(StrictModel):
    delta: float = Field(default=0.3, gt=0, lt=1)
    max_terms: int = Field(default=6, ge=1)
    mode: Literal['deterministic', 'importance'] = 'deterministic'
    time_nodes: int = Field(default=3, ge=2)
    hermite_nodes: int = Field(default=3, ge=1)
    samples: int = Field(default=20000, ge=1)
    strata: int = Field(default=8, ge=1)
    t_max_policy: Literal['enforce', 'warn', 'off'] = 'enforce'
    c_delta: float | None = Field(default=None, gt=0)
    kato_alpha: float | None = Field(default=None, gt=0)
    mollify_level: int | Literal['auto'] | None = 'auto'
    mollify_start: int = Field(default=2, ge=0)
    mollify_max: int = Field(default=8, ge=0)

    def build(self, drift: DriftMeasure, seed: int) -> SeriesConfig:
        return SeriesConfig(drift=drift, seed=seed, **self.model_dump())


class SdeParams(StrictModel):
    mollify_level: int | None = Field(default=None, ge=0)
    step: float = Field(default=1e-3, gt=0)
    horizon: float = Field(default=1.0, gt=0)
    paths: int = Field(default=10000, ge=1)
    block_size: int = Field(default=4096, ge=1)
    envelope: tuple[float, float, float] = (2.0, 1.0, 0.25)

    def build(self, drift: DriftMeasure, seed: int) -> SdeConfig:
        return SdeConfig(drift=drift, seed=seed, **self.model_dump())


class PathSpec(StrictModel):
    knots: list[float] = Field(min_length=2)
    values: list[Point] = Field(min_length=2)

    def build(self) -> PiecewiseLinearPath:
        return PiecewiseLinearPath(self.knots, self.values)


class BallCase(StrictModel):
    y: Point
    eps_ball: float = Field(gt=0)
    r: float = Field(gt=0)


# -------- Блоки экспериментов --------

class KatoParams(StrictModel):
    operation: Literal['norm', 'lambda', 'profile', 'norm-and-profile', 't-delta'] = 'norm'
    dimension: int = Field(default=3, ge=1)
    measure: MeasureSpec | None = None
    drift: DriftSpec | None = None
    profile_measure: MeasureSpec | None = None
    t_grid: list[float] = Field(default_factory=lambda: [0.5, 0.25, 0.125])
    alpha: float = Field(default=0.25, gt=0)
    kernel: Literal['gaussian', 'envelope', 'parametrix'] = 'gaussian'
    envelope: tuple[float, float, float] = (2.0, 1.0, 0.25)
    series: SeriesParams = Field(default_factory=SeriesParams)
    time_panels: int = Field(default=24, ge=2)
    spatial_nodes: int = Field(default=8, ge=1)
    radii: list[float] = Field(default_factory=lambda: [0.5, 0.25, 0.125, 0.0625, 0.03125])
    threshold: float = Field(default=1e-2, gt=0)
    delta: float = Field(default=0.3, gt=0, lt=1)
    c_delta: float | None = Field(default=None, gt=0)

    @model_validator(mode='after')
    def check_target(self):
        if self.operation == 't-delta' and self.drift is None:
            raise ValueError('t-delta требует блок drift')
        if self.operation == 'lambda' and self.kernel == 'parametrix' and self.drift is None:
            raise ValueError('ядро parametrix требует блок drift')
        if self.operation != 't-delta' and self.measure is None:
            raise ValueError(f'{self.operation} требует блок measure')
        if self.operation == 'norm-and-profile' and self.profile_measure is None:
            raise ValueError('norm-and-profile требует блок profile_measure')
        if any(t <= 0 for t in self.t_grid):
            raise ValueError('t_grid: все t должны быть > 0')
        return self


class KernelChecksParams(StrictModel):
    operation: Literal['phi', 'm-delta', 'alpha', 'all'] = 'all'
    z_max: float = Field(default=5.0, gt=0)
    z_points: int = Field(default=50, ge=2)
    deltas: list[float] = Field(default_factory=lambda: [round(0.1 * k, 1) for k in range(1, 10)])
    max_n: int = Field(default=10, ge=1)


class SeriesExperimentParams(StrictModel):
    operation: Literal['heat-kernel', 'lemma-ratio', 'certificate', 'sweep', 't-delta'] = 'heat-kernel'
    drift: DriftSpec
    series: SeriesParams = Field(default_factory=SeriesParams)
    tol: float = Field(default=1e-2, gt=0)
    t: float = Field(default=0.5, gt=0)
    x: Point | None = None
    y: Point | None = None
    ts: list[float] = Field(default_factory=list)
    xs: list[Point] = Field(default_factory=list)
    ys: list[Point] = Field(default_factory=list)
    a1: float = Field(default=0.5, gt=0)
    a2: float = Field(default=0.75, gt=0)
    lemma_ts: list[float] = Field(default_factory=lambda: [0.1, 0.05, 0.025])
    kappas: list[float] = Field(default_factory=lambda: [0.0, 0.5, 1.0, 2.0])
    center: Point | None = None
    measure: MeasureSpec | None = None

    @model_validator(mode='after')
    def check_points(self):
        if self.operation in ('heat-kernel', 'certificate') and (self.x is None or self.y is None):
            raise ValueError(f'{self.operation} требует x и y')
        if self.operation == 'sweep' and not (self.ts and self.xs and self.ys):
            raise ValueError('sweep требует непустые ts, xs, ys')
        if self.operation == 'lemma-ratio' and not 0 < self.a1 < self.a2:
            raise ValueError('нужно 0 < a1 < a2')
        return self


class SimulateParams(StrictModel):
    operation: Literal['paths', 'ball', 'kde', 'coupled', 'chapman', 'sup-tail'] = 'paths'
    drift: DriftSpec
    sde: SdeParams = Field(default_factory=SdeParams)
    x: Point
    y: Point | None = None
    record_times: list[float] | None = None
    balls: list[BallCase] = Field(default_factory=list)
    with_drift_free: bool = False
    t: float = Field(default=1.0, gt=0)
    bandwidth: float | None = Field(default=None, gt=0)
    levels: list[int] = Field(default_factory=lambda: [2, 3, 4])
    eta: float = Field(default=0.5, gt=0, lt=1)
    eps_ball: float = Field(default=0.1, gt=0)
    delta: float = Field(default=0.5, gt=0)
    eps: float = Field(default=0.1, gt=0)
    series: SeriesParams = Field(default_factory=SeriesParams)

    @model_validator(mode='after')
    def check_operation(self):
        if self.operation in ('kde', 'chapman') and self.y is None:
            raise ValueError(f'{self.operation} требует y')
        if self.operation == 'ball' and not self.balls:
            raise ValueError('ball требует непустой список balls')
        return self


class MomentsParams(StrictModel):
    operation: Literal['moment', 'laplace'] = 'moment'
    drift: DriftSpec
    functional: MeasureSpec | None = None
    sde: SdeParams = Field(default_factory=SdeParams)
    x: Point
    powers: list[int] = Field(default_factory=lambda: [1, 2, 3])
    ts: list[float] = Field(default_factory=lambda: [0.1, 0.2])
    lambdas: list[float] = Field(default_factory=lambda: [0.5, 1.0, 2.0])
    oracle: bool = True

    @model_validator(mode='after')
    def check_powers(self):
        if any(n < 0 or n > 6 for n in self.powers):
            raise ValueError('powers: степени должны лежать в 0..6')
        if any(lam <= 0 for lam in self.lambdas):
            raise ValueError('lambdas: λ должно быть > 0')
        return self


class VaradhanParams(StrictModel):
    operation: Literal['curve', 'panel', 'symmetry'] = 'curve'
    mode: Literal['parametrix', 'kde', 'exact'] = 'parametrix'
    drift: DriftSpec
    series: SeriesParams = Field(default_factory=SeriesParams)
    sde: SdeParams = Field(default_factory=SdeParams)
    x: Point | None = None
    y: Point | None = None
    pairs: list[tuple[Point, Point]] = Field(default_factory=list)
    t_grid: list[float] = Field(default_factory=lambda: [0.2, 0.1, 0.05, 0.025])
    tol: float = Field(default=1e-2, gt=0)
    upper_delta: float | None = Field(default=None, gt=0, lt=1)

    @model_validator(mode='after')
    def check_points(self):
        if self.operation == 'panel' and not self.pairs:
            raise ValueError('panel требует непустой список pairs')
        if self.operation != 'panel' and (self.x is None or self.y is None):
            raise ValueError(f'{self.operation} требует x и y')
        return self


class LdpParams(StrictModel):
    operation: Literal['tube', 'exp-equivalence', 'paired'] = 'tube'
    drift: DriftSpec
    sde: SdeParams = Field(default_factory=SdeParams)
    x: Point
    path: PathSpec | None = None
    rho: float = Field(default=0.5, gt=0)
    eps_grid: list[float] = Field(default_factory=lambda: [0.2, 0.1, 0.05])
    delta: float = Field(default=0.5, gt=0)

    @model_validator(mode='after')
    def check_path(self):
        if self.operation in ('tube', 'paired') and self.path is None:
            raise ValueError(f'{self.operation} требует path')
        return self


PARAMETER_SCHEMAS = {
    'kato': KatoParams,
    'kernel-checks': KernelChecksParams,
    'series': SeriesExperimentParams,
    'simulate': SimulateParams,
    'moments': MomentsParams,
    'varadhan': VaradhanParams,
    'ldp': LdpParams,
}


# -------- Конфиг запуска --------

class ExperimentConfig(StrictModel):
    schema_version: Literal['1'] = SCHEMA_VERSION
    experiment: Literal['kato', 'kernel-checks', 'series', 'simulate', 'moments', 'varadhan', 'ldp']
    parameters: dict[str, Any] = Field(default_factory=dict)
    seed: int = Field(default=0, ge=0)
    output: str | None = None
    _params: StrictModel = PrivateAttr()

    @model_validator(mode='after')
    def parse_parameters(self):
        self._params = PARAMETER_SCHEMAS[self.experiment].model_validate(self.parameters)
        return self

    @property
    def params(self):
        return self._params


def parse_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigInvalid(f'конфиг не прошёл проверку:\n{exc}') from exc


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, encoding='utf-8') as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigInvalid(f'не удалось прочитать {path}: {exc}') from exc
    if not isinstance(data, dict):
        raise ConfigInvalid(f'{path}: ожидался JSON-объект')
    return parse_config(data)
