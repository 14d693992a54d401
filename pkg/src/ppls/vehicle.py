"""Vehicle role: key lifecycle, outbound messages and reply decryption."""
from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field

from . import wire
from .asym import (DEFAULT_BITS, AsymKeypair, AsymPublicKey, asym_decrypt, asym_encrypt, asym_keygen,
                   sign)
from .errors import DecryptionFailure, RadiusOutOfRange
from .geo import Point, check_point

log = logging.getLogger(__name__)


@dataclass
class VehicleState:
    vehicle_id: str
    keypair: AsymKeypair
    location: Point
    ls_public_key: AsymPublicKey
    friend_thresholds: dict[str, int] = field(default_factory=dict)
    stranger_threshold: int = 1000
    friends: tuple[str, ...] | None = None  # defaults to the threshold keys

    @property
    def friend_list(self) -> tuple[str, ...]:
        return tuple(self.friends) if self.friends is not None else tuple(self.friend_thresholds)


class VehicleClient:
    """Builds messages from a ``VehicleState``; optionally talks over ``link``
    (anything with ``call(msg) -> msg``, normally a transport endpoint)."""

    def __init__(self, state: VehicleState, rng: random.Random | None = None, link=None,
                 rsa_bits: int = DEFAULT_BITS):
        self.state = state
        self.link = link
        self.rsa_bits = rsa_bits
        self._rng = rng or random.SystemRandom()
        self.registered = False
        self.previous_keypair: AsymKeypair | None = None

    @property
    def vehicle_id(self) -> str:
        return self.state.vehicle_id

    def _encrypt_location(self):
        return asym_encrypt(self.state.ls_public_key, check_point(self.state.location).pack(), self._rng)

    def _signed_fields(self, now: int, signer: AsymKeypair) -> dict:
        st = self.state
        pk = st.keypair.public
        return dict(
            vehicle_id=st.vehicle_id,
            enc_location=self._encrypt_location(),
            enc_public_key=asym_encrypt(st.ls_public_key, pk.to_bytes(), self._rng),
            public_key=pk,
            friends=st.friend_list,
            friend_thresholds=dict(st.friend_thresholds),
            stranger_threshold=st.stranger_threshold,
            ts=now,
            signature=sign(signer, wire.signed_payload(st.vehicle_id, now, pk)),
        )

    def build_registration(self, now: int) -> wire.Registration:
        return wire.Registration(**self._signed_fields(now, self.state.keypair))

    def build_update(self, now: int) -> wire.Update:
        """Rotate the keypair, then build an update signed by the outgoing key.

        The previous keypair is kept in ``previous_keypair`` until the caller
        confirms the update went through.
        """
        self.previous_keypair = self.state.keypair
        self.state.keypair = asym_keygen(self.rsa_bits, self._rng)
        return wire.Update(**self._signed_fields(now, self.previous_keypair))

    def query_particular_friends(self, targets) -> wire.QueryParticularFriends:
        return wire.QueryParticularFriends(vehicle_id=self.vehicle_id, enc_location=self._encrypt_location(),
                                           targets=tuple(targets))

    def query_friends_within(self, radius: int) -> wire.QueryFriendsWithin:
        if radius < 1:
            raise RadiusOutOfRange("radius must be at least 1 m")
        return wire.QueryFriendsWithin(vehicle_id=self.vehicle_id, enc_location=self._encrypt_location(),
                                       radius=radius)

    def query_strangers_within(self, radius: int) -> wire.QueryStrangersWithin:
        if radius < 1:
            raise RadiusOutOfRange("radius must be at least 1 m")
        return wire.QueryStrangersWithin(vehicle_id=self.vehicle_id, enc_location=self._encrypt_location(),
                                         radius=radius)

    def decrypt_response(self, reply: wire.ReplyToVehicle) -> list[tuple[str, Point]]:
        out = []
        for item in reply.items:
            try:
                out.append((item.label, Point.unpack(asym_decrypt(self.state.keypair, item.enc_location))))
            except (DecryptionFailure, ValueError):
                log.warning("%s dropped an undecryptable reply item", self.vehicle_id)
        return out

    # -- conveniences over a live link --------------------------------------

    def register(self, now: int) -> wire.Message:
        reply = self.link.call(self.build_registration(now))
        self.registered = True
        return reply

    def update(self, now: int, location: Point | None = None) -> wire.Message:
        if location is not None:
            self.state.location = check_point(Point(*location))
        msg = self.build_update(now)
        try:
            reply = self.link.call(msg)
        except Exception:
            self.state.keypair = self.previous_keypair
            raise
        return reply

    def request(self, query: wire.Message) -> list[tuple[str, Point]]:
        reply = self.link.call(query)
        if not isinstance(reply, wire.ReplyToVehicle):
            raise DecryptionFailure(f"unexpected reply {type(reply).__name__}")
        return self.decrypt_response(reply)
