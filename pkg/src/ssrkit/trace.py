"""Per-iteration solver records shared by both ADMM solvers."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field


class SolverDivergence(ArithmeticError):
    """An ADMM iterate became non-finite."""


@dataclass
class AdmmTrace:
    objective: list[float] = field(default_factory=list)
    penalty: list[float] = field(default_factory=list)
    residuals: dict[str, list[float]] = field(default_factory=dict)

    def record(self, objective: float, penalty: float, **residuals: float) -> None:
        self.objective.append(float(objective))
        self.penalty.append(float(penalty))
        for name, value in residuals.items():
            self.residuals.setdefault(name, []).append(float(value))

    def __len__(self) -> int:
        return len(self.objective)

    @property
    def max_residual(self) -> list[float]:
        if not self.residuals:
            return []
        return [max(vals) for vals in zip(*self.residuals.values())]

    def summary(self) -> dict:
        if not self.objective:
            return {"iterations": 0}
        return {
            "iterations": len(self),
            "final_objective": self.objective[-1],
            "final_penalty": self.penalty[-1],
            "final_residuals": {k: v[-1] for k, v in self.residuals.items()},
        }

    def to_csv(self, path) -> None:
        """Columns: iter, residual (max over named residuals), objective, penalty, then each residual."""
        names = list(self.residuals)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "residual", "objective", "penalty", *names])
            worst = self.max_residual
            for i in range(len(self)):
                row = [i + 1, repr(worst[i]) if worst else "", repr(self.objective[i]), repr(self.penalty[i])]
                row += [repr(self.residuals[n][i]) for n in names]
                w.writerow(row)
