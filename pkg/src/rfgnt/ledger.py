"""Cost counters for a reconstruction run."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields


@dataclass
class RunLedger:
    newton_iterations: int = 0
    cg_iterations: int = 0
    objective_evaluations: int = 0
    gradient_evaluations: int = 0
    pde_solves: int = 0
    adjoint_solves: int = 0
    helmholtz_solves: int = 0

    def count_objective(self, n_angles: int):
        self.objective_evaluations += 1
        self.pde_solves += 1
        self.helmholtz_solves += n_angles

    def count_gradient(self, n_angles: int):
        self.gradient_evaluations += 1
        self.pde_solves += 1
        self.adjoint_solves += 1
        self.helmholtz_solves += 2 * n_angles

    def snapshot(self) -> "RunLedger":
        return RunLedger(**asdict(self))

    def __sub__(self, other: "RunLedger") -> "RunLedger":
        return RunLedger(**{f.name: getattr(self, f.name) - getattr(other, f.name) for f in fields(self)})

    def as_dict(self) -> dict:
        return asdict(self)

    def identity_violations(self, n_angles: int) -> list[str]:
        """Names of the accounting identities that do not hold (empty when consistent)."""
        bad = []
        if self.pde_solves != self.objective_evaluations + self.gradient_evaluations:
            bad.append("pde_solves = objective_evaluations + gradient_evaluations")
        if self.adjoint_solves != self.gradient_evaluations:
            bad.append("adjoint_solves = gradient_evaluations")
        if self.helmholtz_solves != n_angles * (self.pde_solves + self.adjoint_solves):
            bad.append("helmholtz_solves = angles * (pde_solves + adjoint_solves)")
        return bad
