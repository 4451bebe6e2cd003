try:
    from typing import Literal
except ImportError:
    from typing_extensions import Literal  # type: ignore
from typing import Any, Optional

from pydantic import Field
from eqtlkit.BaseModel import BaseModel


SolverStatus = Literal["converged", "max-iterations", "failed"]


class SolverOutcome(BaseModel):
    solver: str
    status: SolverStatus
    iterations: int = 0
    residual: Optional[float] = Field(None, title="Final convergence measure of the solver")
    message: Optional[str] = None

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def __str__(self):
        txt = f"[{self.status}]({self.solver}) after {self.iterations} iterations"
        if self.residual is not None:
            txt += f", residual={self.residual:.3e}"
        if self.message:
            txt += ": " + self.message
        return txt


class NonConvergenceError(RuntimeError):
    """Raised when an iterative solver hits its iteration cap. Carries the last iterate."""

    def __init__(self, outcome: SolverOutcome, last_iterate: Any = None) -> None:
        self.outcome = outcome
        self.last_iterate = last_iterate
        super().__init__(str(outcome))
