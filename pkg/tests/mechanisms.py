"""Two-agent populations that isolate how a threat moves one observer's attitude.

Each case pairs an observer (agent 0) with a group-M target (agent 1). The
terrorist is the extreme M profile. ``expect`` is the sign of the change in
the observer's attitude toward the target.
"""

from dataclasses import dataclass

from threatsim.core import CulturalIdentity
from threatsim.population import EXCLUSIVE, INCLUSIVE, Population, attitude_matrix
from threatsim.threat import ScenarioSpec, TerroristProfile, run_scenario

T = CulturalIdentity.from_triples


@dataclass(frozen=True)
class Case:
    name: str
    observer: list
    observer_group: int
    target: list
    target_kind: int
    n_messages: int
    expect: int  # -1 decrease, 0 unchanged, +1 increase

    def population(self):
        return Population.from_identities([T(self.observer), T(self.target)],
                                          group=[self.observer_group, 0],
                                          kind=[INCLUSIVE, self.target_kind])


CASES = (
    # wide upper margin on M: contraction removes overlap with an inclusive M target
    Case("large_high_margin", [(0.1, -0.3, 0.8), (0.0, -0.3, 0.4), (0.6, 0.2, 0.9)], 2,
         [(0.5, 0.1, 0.9), (0.0, -0.3, 0.4), (0.0, -0.3, 0.4)], INCLUSIVE, 1, -1),
    # narrow upper margin already short of the exclusive M target's segment
    Case("small_high_margin", [(-0.7, -0.9, -0.64), (0.8, 0.5, 1.0), (-0.5, -0.8, -0.2)], 1,
         [(0.7, 0.5, 0.75), (-0.6, -0.9, -0.3), (-0.6, -0.9, -0.3)], EXCLUSIVE, 1, 0),
    # both margins wide
    Case("both_large_margins", [(-0.3, -0.6, 0.4), (0.8, 0.5, 1.0), (-0.5, -0.8, -0.2)], 1,
         [(0.5, -0.1, 1.0), (-0.6, -0.9, -0.3), (-0.6, -0.9, -0.3)], INCLUSIVE, 1, -1),
    # favourable condition: the target group sits lower on M with a wider upper
    # margin, so its own contraction pulls it toward the observer
    Case("favourable", [(0.3, -0.6, 0.35), (0.6, 0.2, 0.9), (0.0, -0.3, 0.4)], 1,
         [(0.4, -0.3, 1.0), (0.0, -0.3, 0.4), (0.0, -0.3, 0.4)], INCLUSIVE, 7, 1),
)


def attitude_change(case, grid, params):
    """Observer-to-target attitude after the scenario minus before."""
    spec = ScenarioSpec(TerroristProfile.extreme(main=0, k=3, epsilon=params.epsilon), case.n_messages)
    res = run_scenario(case.population(), spec, grid, params, summarize=False)
    before = attitude_matrix(res.initial, grid, params)[0, 1]
    after = attitude_matrix(res.final, grid, params)[0, 1]
    return after - before, res
