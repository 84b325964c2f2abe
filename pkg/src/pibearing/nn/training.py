"""Early stopping bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass, field


def early_stopping(history, patience: int, max_epochs: int = 100) -> tuple[bool, int]:
    """Decide whether to stop after the epochs in ``history``.

    Returns ``(stop, best_epoch)`` with 1-based epoch numbers.  Stops once
    ``patience`` consecutive epochs bring no strict improvement, or at the
    ``max_epochs`` cap.
    """
    if patience < 1:
        raise ValueError("patience must be >= 1")
    best_epoch, best = 0, float("inf")
    for i, loss in enumerate(history, start=1):
        if loss < best:
            best, best_epoch = loss, i
    n = len(history)
    stop = n >= max_epochs or (n > 0 and n - best_epoch >= patience)
    return stop, best_epoch


@dataclass
class EarlyStopping:
    patience: int = 10
    max_epochs: int = 100
    history: list = field(default_factory=list)
    best_epoch: int = 0
    best_state: dict | None = None

    def update(self, loss: float, state_fn) -> bool:
        """Record an epoch's validation loss; returns True when training should stop."""
        self.history.append(float(loss))
        stop, best = early_stopping(self.history, self.patience, self.max_epochs)
        if best == len(self.history):
            self.best_state = state_fn()
        self.best_epoch = best
        return stop
