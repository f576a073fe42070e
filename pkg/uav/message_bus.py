# uav/message_bus.py
"""
In-process publish/subscribe bus with the six drone topics.

Node 01 owns /UAV/reset, /UAV/land, /cmd_vel and /UAV/takeoff; Node 02 owns
/UAV/navdata and /UAV/front/image_raw. Each subscriber has its own FIFO;
image subscribers keep only the two newest frames.
"""

import logging
import threading
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Deque, Dict, List, Optional, Tuple

from core.errors import AuthorizationError, ConfigurationError

logger = logging.getLogger(__name__)

IMAGE_QUEUE_SIZE = 2


class TopicName(str, Enum):
    RESET = "/UAV/reset"
    LAND = "/UAV/land"
    CMD_VEL = "/cmd_vel"
    TAKEOFF = "/UAV/takeoff"
    NAVDATA = "/UAV/navdata"
    IMAGE_RAW = "/UAV/front/image_raw"


class NodeName(str, Enum):
    NODE01 = "node01"
    NODE02 = "node02"


TOPIC_ALIASES = {"/UAVtakeoff": TopicName.TAKEOFF}

OWNERS: Dict[TopicName, NodeName] = {
    TopicName.RESET: NodeName.NODE01,
    TopicName.LAND: NodeName.NODE01,
    TopicName.CMD_VEL: NodeName.NODE01,
    TopicName.TAKEOFF: NodeName.NODE01,
    TopicName.NAVDATA: NodeName.NODE02,
    TopicName.IMAGE_RAW: NodeName.NODE02,
}

IMAGE_TOPICS = frozenset({TopicName.IMAGE_RAW})


def parse_topic(name) -> TopicName:
    if isinstance(name, TopicName):
        return name
    if name in TOPIC_ALIASES:
        return TOPIC_ALIASES[name]
    try:
        return TopicName(name)
    except ValueError as exc:
        raise ConfigurationError(f"unknown topic {name!r}") from exc


@dataclass(frozen=True)
class Envelope:
    topic: TopicName
    publisher: NodeName
    seq: int
    sim_time: float
    payload: bytes = b""


class Subscription:
    """One subscriber's queue on one topic"""

    def __init__(self, topic: TopicName, name: str, maxlen: Optional[int]):
        self.topic = topic
        self.name = name
        self._queue: Deque[Envelope] = deque(maxlen=maxlen)
        self._cond = threading.Condition()
        self.dropped = 0
        self.received = 0

    def _push(self, envelope: Envelope) -> None:
        with self._cond:
            if self._queue.maxlen is not None and len(self._queue) == self._queue.maxlen:
                self.dropped += 1
            self._queue.append(envelope)
            self.received += 1
            self._cond.notify_all()

    def get(self, timeout: Optional[float] = None) -> Optional[Envelope]:
        """Oldest pending envelope; waits up to timeout (None = no wait)"""
        with self._cond:
            if not self._queue and timeout:
                self._cond.wait(timeout)
            return self._queue.popleft() if self._queue else None

    def drain(self) -> List[Envelope]:
        with self._cond:
            items = list(self._queue)
            self._queue.clear()
            return items

    def __len__(self) -> int:
        with self._cond:
            return len(self._queue)


class MessageBus:
    """Thread-safe topic bus enforcing the node/topic ownership matrix"""

    def __init__(self):
        self._lock = threading.Lock()
        self._subscriptions: Dict[TopicName, List[Subscription]] = {topic: [] for topic in TopicName}
        self._seq: Dict[Tuple[NodeName, TopicName], int] = {}
        self.published = 0

    def subscribe(self, topic, name: str = "") -> Subscription:
        topic = parse_topic(topic)
        maxlen = IMAGE_QUEUE_SIZE if topic in IMAGE_TOPICS else None
        subscription = Subscription(topic, name, maxlen)
        with self._lock:
            self._subscriptions[topic].append(subscription)
        return subscription

    def publish(self, publisher: NodeName, topic, payload: bytes = b"", sim_time: float = 0.0) -> Envelope:
        topic = parse_topic(topic)
        publisher = NodeName(publisher)
        if OWNERS[topic] != publisher:
            raise AuthorizationError(f"{publisher.value} may not publish on {topic.value}")
        # seq assignment and fan-out under one lock keep per-topic order identical for all subscribers
        with self._lock:
            key = (publisher, topic)
            seq = self._seq.get(key, 0) + 1
            self._seq[key] = seq
            envelope = Envelope(topic, publisher, seq, sim_time, payload)
            for subscription in self._subscriptions[topic]:
                subscription._push(envelope)
            self.published += 1
        return envelope

    def dropped(self) -> int:
        with self._lock:
            return sum(s.dropped for subs in self._subscriptions.values() for s in subs)
