"""hoguard: ping-pong handover analyzer with an approval-gated fix loop.

A seedable two-cell RAN simulator produces mobility telemetry; an
event-batched reasoning loop diagnoses ping-pong handovers through
gated log/config tools; minimal A3 patches apply only after explicit
operator approval.
"""

__version__ = "0.1.0"
