"""Wires SNS, location servers and vehicles together over one transport."""
from __future__ import annotations

import random

from .. import paillier
from ..asym import DEFAULT_BITS as RSA_DEFAULT_BITS, asym_keygen
from ..distcmp import ComparisonParams
from ..geo import Point, check_point
from ..ls import LocationServer
from ..meter import CostMeter
from ..sns import SocialNetworkServer
from ..transport import DEFAULT_TIMEOUT, SimClock, TransportLog, make_backend
from ..vehicle import VehicleClient, VehicleState


def role_rng(seed, role: str) -> random.Random:
    """Independent deterministic stream per role."""
    return random.Random(f"{seed}/{role}")


class Deployment:
    """A full system: one SNS, ``ls_count`` location servers sharing the LS
    keypair, and any number of vehicles, all on a shared simulated clock."""

    def __init__(self, *, ls_count: int = 2, params: ComparisonParams | None = None,
                 paillier_bits: int = paillier.DEFAULT_BITS, rsa_bits: int = RSA_DEFAULT_BITS,
                 update_cycle_ms: int = 60_000, record_ttl_ms: int = 75_000, dummy_count: int = 1,
                 seed=0, backend: str = "inproc", timeout: float | None = DEFAULT_TIMEOUT,
                 meter: CostMeter | None = None):
        self.seed = seed
        self.params = params or ComparisonParams()
        self.rsa_bits = rsa_bits
        self.clock = SimClock()
        self.log = TransportLog()
        self.meter = meter or CostMeter()
        self.transport = make_backend(backend, self.log, self.clock, timeout)
        ls_keypair = asym_keygen(rsa_bits, role_rng(seed, "ls-keys"))
        self.ls_public_key = ls_keypair.public
        self.location_servers = []
        for j in range(ls_count):
            ls = LocationServer(j, ls_keypair, self.params, self.clock, role_rng(seed, f"ls:{j}"), self.meter)
            self.transport.listen(ls.role, ls.handle)
            self.location_servers.append(ls)
        links = [self.transport.connect("sns", ls.role) for ls in self.location_servers]
        self.sns = SocialNetworkServer(
            links, self.params, self.clock, update_cycle_ms=update_cycle_ms, record_ttl_ms=record_ttl_ms,
            paillier_bits=paillier_bits, dummy_count=dummy_count, rng=role_rng(seed, "sns"), meter=self.meter)
        self.transport.listen("sns", self.sns.handle)
        self.vehicles: dict[str, VehicleClient] = {}

    def add_vehicle(self, vehicle_id: str, location, friend_thresholds: dict[str, int] | None = None,
                    stranger_threshold: int = 1000) -> VehicleClient:
        if vehicle_id in self.vehicles:
            raise ValueError(f"duplicate vehicle {vehicle_id}")
        rng = role_rng(self.seed, f"vehicle:{vehicle_id}")
        state = VehicleState(vehicle_id=vehicle_id, keypair=asym_keygen(self.rsa_bits, rng),
                             location=check_point(Point(*location)), ls_public_key=self.ls_public_key,
                             friend_thresholds=dict(friend_thresholds or {}),
                             stranger_threshold=stranger_threshold)
        link = self.transport.connect(f"vehicle:{vehicle_id}", "sns")
        client = VehicleClient(state, rng, link, rsa_bits=self.rsa_bits)
        self.vehicles[vehicle_id] = client
        return client

    def now(self) -> int:
        return self.clock.now_ms()

    def purge(self) -> int:
        now = self.clock.now_ms()
        return sum(ls.purge_expired(now) for ls in self.location_servers)

    def close(self) -> None:
        self.transport.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
