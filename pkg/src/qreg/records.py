"""Per-run training records and their CSV serialization.

CSV schema, one row per epoch, numbers at 6 significant digits, final line
newline-terminated:

    epoch,train_loss,val_loss,train_acc,val_acc,test_acc

Multi-task runs append per-task F1 columns and their average:

    ...,f1_t0,...,f1_t{T-1},f1_avg

train_loss is the mean optimized data term over the epoch's minibatches
(smoothed targets when label smoothing is on; the weight-decay penalty is
never included). val_loss/val_acc/test_acc are eval-mode metrics on hard
labels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ContractError


def fmt(v: float) -> str:
    return f"{v:.6g}"


@dataclass
class EpochRow:
    epoch: int
    train_loss: float
    val_loss: float
    train_acc: float
    val_acc: float
    test_acc: float
    f1: tuple[float, ...] | None = None
    f1_avg: float | None = None

    def metrics(self) -> dict[str, float]:
        out = {
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "train_acc": self.train_acc,
            "val_acc": self.val_acc,
            "test_acc": self.test_acc,
        }
        if self.f1 is not None:
            for t, v in enumerate(self.f1):
                out[f"f1_t{t}"] = v
            out["f1_avg"] = self.f1_avg
        return out


@dataclass
class RunRecord:
    fingerprint: str
    seed: int
    num_tasks: int = 0
    rows: list[EpochRow] = field(default_factory=list)
    best_epoch: int = 0  # 1-based; 0 means "last row"

    def final_row(self) -> EpochRow:
        if not self.rows:
            raise ContractError("run record holds no completed epoch")
        idx = self.best_epoch - 1 if self.best_epoch else len(self.rows) - 1
        return self.rows[idx]

    @property
    def final_test_acc(self) -> float:
        return self.final_row().test_acc

    @property
    def final_f1_avg(self) -> float:
        row = self.final_row()
        if row.f1_avg is None:
            raise ContractError("single-task record has no F1 columns")
        return row.f1_avg

    def header(self) -> list[str]:
        cols = ["epoch", "train_loss", "val_loss", "train_acc", "val_acc", "test_acc"]
        if self.num_tasks:
            cols += [f"f1_t{t}" for t in range(self.num_tasks)] + ["f1_avg"]
        return cols

    def to_csv_text(self) -> str:
        lines = [",".join(self.header())]
        for row in self.rows:
            cells = [
                str(row.epoch),
                fmt(row.train_loss),
                fmt(row.val_loss),
                fmt(row.train_acc),
                fmt(row.val_acc),
                fmt(row.test_acc),
            ]
            if self.num_tasks:
                if row.f1 is None or len(row.f1) != self.num_tasks:
                    raise ContractError(f"epoch {row.epoch} row lacks {self.num_tasks} F1 values")
                cells += [fmt(v) for v in row.f1] + [fmt(row.f1_avg)]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv_text())
