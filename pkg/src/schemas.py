from pydantic import BaseModel, Field, ValidationError as PydanticValidationError, field_validator
from typing import Literal, Optional

from src import config
from src.utils import ValidationError


class ConfigError(ValidationError):
    pass


class BlockLengthStats(BaseModel):
    max_deviation: float
    worst_block: str
    chi_square: float
    dof: int
    p_value: float
    threshold: Optional[float] = None
    passed: Optional[bool] = None


class NormalityReport(BaseModel):
    base: int
    kmax: int
    positions: int
    lengths: dict[int, BlockLengthStats]
    selection_count: Optional[int] = None
    selection_density: Optional[float] = None
    expected_density: Optional[float] = None
    thresholds: dict[int, float] = {}
    verdict: str


class CrossCheckRow(BaseModel):
    block: str
    direct_frequency: float
    visit_ratio: float
    expected_ratio: float
    discrepancy: float


class CrossCheckReport(BaseModel):
    automaton: str
    k: int
    selection_count: int
    rows: list[CrossCheckRow]
    max_discrepancy: float
    bound: float
    within_bound: bool


class AutomatonReport(BaseModel):
    automaton: str
    base: int
    transitive: bool
    unreachable_pair: Optional[list[str]] = None
    measure_preserved: bool
    violating_state: Optional[str] = None
    state_count: int
    selection_count: int
    in_degree_criterion: Optional[bool] = None
    formula_audit: Optional[dict] = None
    certificates: Optional[list[dict]] = None


class PipelineConfig(BaseModel):
    """
    One experiment: generate -> select -> analyze -> cross-check.
    Loaded from a `key = value` file, see `load_pipeline_config`.
    """
    source: Literal['champernowne', 'constant', 'periodic', 'seeded_uniform', 'file']
    base: Optional[int] = Field(default=None, ge=2)
    count: Optional[int] = Field(default=None, ge=0)
    seed: int = config.DEFAULT_SEED
    digit: Optional[int] = None
    pattern: Optional[str] = None
    path: Optional[str] = None
    rule: Optional[str] = None
    kmax: int = Field(default=config.DEFAULT_KMAX, ge=1)
    thresholds: dict[int, float] = Field(default_factory=lambda: dict(config.VERDICT_THRESHOLDS))
    cross_check_k: int = Field(default=config.CROSS_CHECK_K, ge=1)
    output_dir: str = 'results'
    strict: bool = False

    @field_validator('thresholds', mode='before')
    @classmethod
    def coerce_thresholds(cls, value):
        if isinstance(value, str):
            return parse_thresholds(value)
        return value


class Manifest(BaseModel):
    config: dict
    input: dict
    rule: Optional[str] = None
    output_base: Optional[int] = None
    selection_count: Optional[int] = None
    verdicts: dict[str, str] = {}
    cross_check_within_bound: Optional[bool] = None
    artifacts: dict[str, str] = {}  # file name -> sha256


def parse_thresholds(text: str) -> dict:
    """`1:0.01,2:0.02` -> {1: 0.01, 2: 0.02}."""
    thresholds = {}
    for item in text.split(','):
        item = item.strip()
        if not item:
            continue
        j, sep, value = item.partition(':')
        if not sep:
            raise ConfigError(f"threshold '{item}' must read <length>:<value>")
        try:
            thresholds[int(j)] = float(value)
        except ValueError:
            raise ConfigError(f"threshold '{item}' must read <length>:<value>") from None
    return thresholds


def read_key_values(path) -> dict:
    """`key = value` lines; blank lines and `#` comments are ignored."""
    values = {}
    with open(path, 'r', encoding='utf-8') as f:
        for lineno, line in enumerate(f, start=1):
            line = line.split('#', 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition('=')
            if not sep or not key.strip():
                raise ConfigError(f"{path}: line {lineno}: expected key = value")
            values[key.strip()] = value.strip()
    return values


def load_pipeline_config(path) -> PipelineConfig:
    values = read_key_values(path)
    try:
        return PipelineConfig(**values)
    except PydanticValidationError as e:
        problems = '; '.join(f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors())
        raise ConfigError(f"{path}: {problems}") from None
