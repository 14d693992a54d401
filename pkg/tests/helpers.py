from ppls.distcmp import ComparisonParams
from ppls.harness.deployment import Deployment

SMALL = dict(paillier_bits=128, rsa_bits=512, params=ComparisonParams())


def small_deployment(**overrides) -> Deployment:
    kwargs = dict(SMALL, seed="unit", timeout=10.0)
    kwargs.update(overrides)
    return Deployment(**kwargs)


def triangle(dep, bob_for_alice=50, alice_for_bob=40, carol_ds=200):
    """alice (1000,1000); friend bob 30 m away; stranger carol 80 m away."""
    alice = dep.add_vehicle("alice", (1000, 1000), {"bob": alice_for_bob}, 300)
    bob = dep.add_vehicle("bob", (1018, 1024), {"alice": bob_for_alice}, 300)
    carol = dep.add_vehicle("carol", (1048, 1064), {}, carol_ds)
    for v in (alice, bob, carol):
        v.register(dep.now())
    return alice, bob, carol
