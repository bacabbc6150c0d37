"""Independent oracles the test suite checks the implementation against.

Each oracle is deliberately written with a different structure than the
code under test: the safety rules as a flat scan over a literal table, the
braking distance in closed form plus a fine-step integrator. They share no
code with the package beyond primitive types.
"""

from pitwall.modules import DiagnosticLevel
from pitwall.orchestration import BehaviorRequest, DrivingConditions, SafetyAction

_RANK = {"nominal": 0, "safe": 1, "emergency": 2, "hard": 3}
_TO_ACTION = {
    "nominal": SafetyAction.NOMINAL,
    "safe": SafetyAction.SAFE_STOP,
    "emergency": SafetyAction.EMERGENCY_STOP,
    "hard": SafetyAction.HARD_EMERGENCY,
}


def rule_table_action(levels: dict[str, DiagnosticLevel],
                      conditions: DrivingConditions,
                      behavior: BehaviorRequest,
                      critical: frozenset[str],
                      lateral_threshold: float) -> SafetyAction:
    """Flat rule table: scan every rule, keep the worst triggered class."""
    bad = {DiagnosticLevel.ERROR, DiagnosticLevel.STALE}
    rules = [
        ("hard", any(lvl in bad for m, lvl in levels.items() if m in critical)),
        ("hard", conditions.lateral_offset > lateral_threshold),
        ("hard", not conditions.localization_ok),
        ("emergency", not conditions.trajectory_valid),
        ("emergency", not conditions.tracking_ok),
        ("safe", any(lvl in bad for m, lvl in levels.items() if m not in critical)),
        ("safe", not conditions.basestation_link_ok),
        ("safe", behavior is BehaviorRequest.STOP),
    ]
    worst = "nominal"
    for name, fired in rules:
        if fired and _RANK[name] > _RANK[worst]:
            worst = name
    return _TO_ACTION[worst]


def braking_distance_closed_form(v0: float, decel: float) -> float:
    """Stopping distance under constant deceleration: v^2 / (2 a)."""
    return v0 * v0 / (2.0 * decel)


def integrate_braking(v0: float, decel: float, dt: float = 1e-5) -> float:
    """Fine-step integration of the same braking maneuver (cross-check)."""
    v = v0
    distance = 0.0
    while v > 0.0:
        v_next = max(0.0, v - decel * dt)
        distance += 0.5 * (v + v_next) * dt
        v = v_next
    return distance
