"""A shared-RIS scenario from the ground up.

Builds the small desk scenario (two operators, two surfaces), draws one
channel realization and shows how the allocation changes what each operator
can achieve. Run: python3 demos/01_environment.py
"""
import itertools

import numpy as np

from hdrl_ris.config import build_config
from hdrl_ris.env import ChannelModel, OpAction, sample_topology, step
from hdrl_ris.seeding import derive_rng

config = build_config(preset="desk").system
topology = sample_topology(config, derive_rng(0, "topology"))
print("base stations (per OP):\n", topology.bs_positions.round(1))
print("surfaces:\n", topology.ris_positions.round(1))

model = ChannelModel(topology, config)
channels = model.sample(derive_rng(0, "channels"))

# a fixed, arbitrary action per operator: random phases, everyone on BS 1, random beams
rng = np.random.default_rng(1)
actions = []
for _ in range(config.num_ops):
    phases = rng.uniform(0, 2 * np.pi, (config.num_ris, config.elements_per_ris))
    beams = rng.normal(size=(config.num_antennas, config.num_users_per_op)) + 0j
    actions.append(OpAction(phases, np.ones(config.num_users_per_op, dtype=int), beams))

print("\nsum-rate per OP for every allocation (b_1, b_2):")
for alloc in itertools.product(range(1, config.num_ops + 1), repeat=config.num_ris):
    rates = step(channels, alloc, actions, config)
    print(f"  {alloc}: " + "  ".join(f"OP{s + 1} {r:6.3f}" for s, r in enumerate(rates)))

bare = step(channels.without_reflection(), (1, 1), actions, config)
print("\nwithout any surface:", "  ".join(f"OP{s + 1} {r:6.3f}" for s, r in enumerate(bare)))

# an operator's phase choices only act on surfaces it owns
shifted = [OpAction(actions[0].phases + 1.0, actions[0].assoc, actions[0].raw_beams)] + actions[1:]
for alloc in ((1, 1), (2, 2)):
    before = step(channels, alloc, actions, config)[0]
    after = step(channels, alloc, shifted, config)[0]
    print(f"allocation {alloc}: OP1 rate {before:.3f} -> {after:.3f} after shifting OP1's phases")
