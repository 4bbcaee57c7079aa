from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator
from typing import List, Optional, Dict, Any, Type, TypeVar, Union
from datetime import datetime
from pathlib import Path
from enum import Enum
import math

from renewal.core.errors import DocumentError


class RenderOrder(str, Enum):
    """Order in which context symbols are written."""
    OLDEST_FIRST = "oldest-first"
    RECENT_FIRST = "recent-first"


class CommandName(str, Enum):
    """Commands exposed by the command line."""
    SIMULATE = "simulate"
    POSTERIOR = "posterior"
    RENEWAL = "renewal"
    EXACT = "exact"


class ModelName(str, Enum):
    """Probabilistic context trees available to the simulator."""
    MODEL1 = "model1"
    MODEL2 = "model2"
    CUSTOM = "custom"


class Hypothesis(str, Enum):
    """Which side of the renewal split a prior is restricted to."""
    RENEWING = "renewing"
    NOT_RENEWING = "not-renewing"


class TrimMode(str, Enum):
    FRACTION = "fraction"
    COUNT = "count"


class EvidenceStrength(str, Enum):
    """Kass-Raftery evidence bands for |log10 BF|."""
    BARE_MENTION = "bare mention"
    SUBSTANTIAL = "substantial"
    STRONG = "strong"
    DECISIVE = "decisive"


class Favours(str, Enum):
    RENEWING = "H_a"
    NOT_RENEWING = "H_abar"
    NEITHER = "neither"


class TreeDocument(BaseModel):
    """Context tree file: contexts written oldest-first."""
    L: int = Field(ge=1, description="Depth bound")
    m: int = Field(ge=2, description="Alphabet size")
    contexts: List[str]

    @field_validator('contexts')
    def contexts_not_empty(cls, v):
        if not v:
            raise ValueError('A context tree needs at least one context')
        return v


class AllowedMatrixDocument(BaseModel):
    """Allowed one-step transitions; rows are 'from', columns are 'to'."""
    m: int = Field(ge=2)
    allowed: List[List[bool]]

    @model_validator(mode='after')
    def square_matrix(self):
        if len(self.allowed) != self.m or any(len(row) != self.m for row in self.allowed):
            raise ValueError(f'allowed must be a {self.m}x{self.m} matrix')
        return self


class PctDocument(TreeDocument):
    """Probabilistic context tree: a tree plus one distribution per context."""
    p: Dict[str, List[float]]
    allowed: Optional[List[List[bool]]] = None


class RunConfig(BaseModel):
    """Complete configuration of one command-line run."""
    command: CommandName
    dataset_path: Optional[Path] = None
    alphabet_size: Optional[int] = Field(default=None, ge=2)
    max_depth: Optional[int] = Field(default=None, ge=1)
    state: Optional[int] = Field(default=None, ge=0)
    hypothesis: Hypothesis = Hypothesis.RENEWING
    v: int = Field(default=1, ge=1, description="Training sequences per partial Bayes factor")
    iters: int = Field(default=100_000, ge=1)
    burn_in: int = Field(default=0, ge=0)
    trim: float = Field(default=0.10, ge=0.0, lt=0.5)
    trim_count: Optional[int] = Field(default=None, ge=0)
    seed: int = Field(ge=0, lt=2**64)
    jobs: int = Field(default=1, ge=1)
    alpha: float = Field(default=0.001, gt=0)
    allowed_path: Optional[Path] = None
    pct_path: Optional[Path] = None
    model: ModelName = ModelName.MODEL1
    n_sequences: int = Field(default=3, ge=1)
    length: int = Field(default=1000, ge=2)
    sim_burn_in: Optional[int] = Field(default=None, ge=0)
    output_dir: Path = Path("output")
    render: RenderOrder = RenderOrder.OLDEST_FIRST
    dump_chain: bool = False
    top: int = Field(default=10, ge=1)

    @model_validator(mode='after')
    def check_command_requirements(self):
        for path in (self.dataset_path, self.allowed_path, self.pct_path):
            if path is not None and not Path(path).is_file():
                raise ValueError(f'file not found: {path}')

        if self.command in (CommandName.POSTERIOR, CommandName.RENEWAL, CommandName.EXACT):
            if self.alphabet_size is None or self.max_depth is None:
                raise ValueError(f'{self.command.value} needs --alphabet-size and --max-depth')
        if self.command in (CommandName.POSTERIOR, CommandName.RENEWAL) and self.dataset_path is None:
            raise ValueError(f'{self.command.value} needs a dataset')
        if self.command == CommandName.RENEWAL and self.state is None:
            raise ValueError('renewal needs --state')
        if self.state is not None and self.alphabet_size is not None and self.state >= self.alphabet_size:
            raise ValueError(f'state {self.state} is not a symbol of an alphabet of size {self.alphabet_size}')
        if self.command == CommandName.SIMULATE and self.model == ModelName.CUSTOM and self.pct_path is None:
            raise ValueError('a custom model needs --pct')
        return self


class Manifest(BaseModel):
    """Record of a run, sufficient to replay it."""
    tool: str
    version: str
    created: datetime = Field(default_factory=datetime.now)
    config: RunConfig
    outputs: List[str] = Field(default_factory=list)


class TreeFrequency(BaseModel):
    """A context tree with its posterior weight."""
    contexts: List[str]
    probability: float = Field(ge=0.0, le=1.0)
    log_q: Optional[float] = None
    visits: Optional[int] = None


class PosteriorReport(BaseModel):
    """Empirical posterior over context trees from one chain."""
    n_iter: int
    burn_in: int
    seed: int
    acceptance_rate: float = Field(ge=0.0, le=1.0)
    distinct_trees: int
    constraints: List[str] = Field(default_factory=list)
    render: RenderOrder = RenderOrder.OLDEST_FIRST
    trees: List[TreeFrequency]


class EvidenceLabel(BaseModel):
    strength: EvidenceStrength
    favours: Favours

    def __str__(self) -> str:
        if self.favours == Favours.NEITHER:
            return self.strength.value
        return f"{self.strength.value} (favouring {self.favours.value})"


class PbfRecord(BaseModel):
    """Monte Carlo partial Bayes factor for one training subset."""
    subset: List[int]
    log10_pbf: float
    log10_num: float
    log10_den: float
    seed_renewing: int
    seed_not_renewing: int
    acceptance_renewing: float = Field(ge=0.0, le=1.0)
    acceptance_not_renewing: float = Field(ge=0.0, le=1.0)

    @model_validator(mode='after')
    def pbf_is_ratio(self):
        if not math.isclose(self.log10_pbf, self.log10_num - self.log10_den, rel_tol=1e-12, abs_tol=1e-9):
            raise ValueError('log10_pbf must equal log10_num - log10_den')
        return self


class IntrinsicBayesFactors(BaseModel):
    """AIBF and GIBF in log10 scale, untrimmed and trimmed."""
    aibf: float
    gibf: float
    aibf_trimmed: float
    gibf_trimmed: float
    n_records: int
    trimmed_per_tail: int
    trim_mode: TrimMode
    trim_fraction: Optional[float] = None
    trim_count: Optional[int] = None
    labels: Dict[str, EvidenceLabel] = Field(default_factory=dict)


class RenewalReport(BaseModel):
    """Outcome of a renewal-state test for one symbol."""
    state: int
    n_sequences: int
    v: int
    n_iter: int
    burn_in: int = 0
    seed: int
    alpha: float
    constrained: bool = False
    records: List[PbfRecord]
    aggregates: IntrinsicBayesFactors

    def summary_row(self) -> Dict[str, Any]:
        """One row of the per-state summary table (log10 scale)."""
        return {
            "a": self.state,
            "I": self.n_sequences,
            "v": self.v,
            "AIBF": round(self.aggregates.aibf, 2),
            "GIBF": round(self.aggregates.gibf, 2),
            "AIBF_trimmed": round(self.aggregates.aibf_trimmed, 2),
            "GIBF_trimmed": round(self.aggregates.gibf_trimmed, 2),
        }


class ExactReport(BaseModel):
    """Enumeration-based evidence, posterior and Bayes factor."""
    m: int
    L: int
    n_trees: int
    log_evidence: float
    constraints: List[str] = Field(default_factory=list)
    posterior: List[TreeFrequency]
    state: Optional[int] = None
    renewing_trees: Optional[int] = None
    not_renewing_trees: Optional[int] = None
    log10_bayes_factor: Optional[float] = None
    label: Optional[EvidenceLabel] = None


DocumentT = TypeVar("DocumentT", bound=BaseModel)


def read_document(path: Union[str, Path], model: Type[DocumentT]) -> DocumentT:
    """Parse a JSON file into ``model``; malformed or mistyped content raises DocumentError naming the file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        raise DocumentError(str(path), f"not valid UTF-8 (byte {e.start})") from None
    try:
        return model.model_validate_json(text)
    except ValidationError as e:
        problems = [
            f"{'.'.join(map(str, error['loc']))}: {error['msg']}" if error['loc'] else error['msg']
            for error in e.errors()
        ]
        raise DocumentError(str(path), "; ".join(problems)) from None
