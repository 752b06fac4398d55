"""Live WebSocket transport around a session runtime.

One server hosts one session.  Scripted bots (if any) are joined at boot and
driven on the wall clock; humans join over WebSocket with a join frame and
the session starts once the expected number of human seats is filled.  All
mutations funnel through an asyncio lock onto the runtime's command stream;
fan-out delivery reuses the frames the runtime returns.  Scheduled actions
(bot posts, relay ticks, closing, close) are stamped with their scheduled
session-relative times; ``time_scale`` compresses the wall schedule for
demos and tests without changing the log.
"""

from __future__ import annotations

import asyncio
import logging
import time
from pathlib import Path
from typing import Optional, Sequence

from websockets.asyncio.server import serve

from .agent import CompletionService
from .core import ParticipantKind, SessionConfig, SessionState
from .errors import CsiError, InvalidFrame
from .events import log_file_name
from .metrics import Lexicon
from .server import (
    KLASS_ANSWER,
    KLASS_CLOSE,
    KLASS_CLOSING,
    KLASS_POST,
    KLASS_TICK,
    Delivery,
    SessionRuntime,
)
from .simharness import BotScript
from .wire import AnswerFrame, JoinFrame, PostFrame, decode_frame, encode_frame

logger = logging.getLogger(__name__)

ANSWER_COMMAND = "/answer"


class LiveSessionServer:
    """Serve one session over WebSocket until it closes."""

    def __init__(
        self,
        config: SessionConfig,
        bots: Sequence[BotScript] = (),
        arm: str = "csi",
        human_seats: int = 0,
        session_id: Optional[str] = None,
        time_scale: float = 1.0,
        out_dir: str = ".",
        lexicon: Optional[Lexicon] = None,
        service: Optional[CompletionService] = None,
    ):
        if time_scale <= 0:
            raise ValueError("time_scale must be positive")
        self.runtime = SessionRuntime.create(
            config, session_id=session_id, arm=arm, lexicon=lexicon, service=service
        )
        self.bots = list(bots)
        self.human_seats = human_seats
        self.time_scale = time_scale
        self.out_dir = Path(out_dir)
        self.log_path: Optional[Path] = None
        self._connections: dict[str, object] = {}
        self._lock = asyncio.Lock()
        self._started = False
        self._t0: Optional[float] = None
        self._finished = asyncio.Event()
        for bot in self.bots:
            self.runtime.join(
                bot.name, ParticipantKind.BOT, participant_id=bot.bot_id, at_ms=0
            )

    # ------------------------------------------------------------------

    def _now_ms(self) -> int:
        if self._t0 is None:
            return 0
        elapsed = (time.monotonic() - self._t0) * 1000.0 * self.time_scale
        return max(int(elapsed), self.runtime.log.last_at_ms)

    async def _deliver(self, deliveries: list[Delivery]) -> None:
        for participant_id, frame in deliveries:
            connection = self._connections.get(participant_id)
            if connection is None:
                continue
            try:
                await connection.send(encode_frame(frame))
            except Exception:
                logger.debug("delivery to %s failed", participant_id, exc_info=True)

    async def handler(self, connection) -> None:
        try:
            raw = await connection.recv()
        except Exception:
            return
        try:
            frame = decode_frame(raw)
        except InvalidFrame as exc:
            await connection.close(code=1002, reason=str(exc)[:120])
            return
        if not isinstance(frame, JoinFrame):
            await connection.close(code=1002, reason="first frame must be join")
            return
        async with self._lock:
            if self.runtime.session.state is not SessionState.LOBBY:
                await connection.close(code=1013, reason="session already active")
                return
            participant = self.runtime.join(frame.name, ParticipantKind.HUMAN, at_ms=0)
            self._connections[participant.id] = connection
            humans = sum(
                1
                for p in self.runtime.session.participants.values()
                if p.kind is ParticipantKind.HUMAN
            )
            seats_filled = humans >= self.human_seats
        if seats_filled:
            await self._maybe_start()
        try:
            async for raw in connection:
                await self._on_frame(participant.id, raw)
        except Exception:
            logger.debug("connection for %s dropped", participant.id, exc_info=True)
        finally:
            async with self._lock:
                self._connections.pop(participant.id, None)

    async def _maybe_start(self) -> None:
        async with self._lock:
            if self._started or self.runtime.session.state is not SessionState.LOBBY:
                return
            self._started = True
            deliveries = self.runtime.start(at_ms=0)
            self._t0 = time.monotonic()
        await self._deliver(deliveries)
        asyncio.ensure_future(self._run_schedule())

    async def _on_frame(self, participant_id: str, raw: str) -> None:
        try:
            frame = decode_frame(raw)
        except InvalidFrame as exc:
            logger.info("undecodable frame from %s: %s", participant_id, exc)
            return
        deliveries: list[Delivery] = []
        async with self._lock:
            now = self._now_ms()
            try:
                if isinstance(frame, PostFrame):
                    text = frame.text
                    if text.strip().startswith(ANSWER_COMMAND):
                        answer = text.strip()[len(ANSWER_COMMAND):].strip()
                        self.runtime.submit_answer(participant_id, answer, now)
                    else:
                        _, deliveries = self.runtime.post(participant_id, text, now)
                elif isinstance(frame, AnswerFrame):
                    self.runtime.submit_answer(participant_id, frame.text, now)
                else:
                    logger.info(
                        "ignoring %s frame from %s", type(frame).__name__, participant_id
                    )
            except CsiError as exc:
                logger.info("rejected %s from %s: %s", type(frame).__name__, participant_id, exc)
        await self._deliver(deliveries)

    async def _run_schedule(self) -> None:
        config = self.runtime.session.config
        commands: list[tuple[int, int, int, object]] = []
        order = 0

        def push(at_ms: int, klass: int, action) -> None:
            nonlocal order
            commands.append((at_ms, klass, order, action))
            order += 1

        for bot in self.bots:
            for at_ms, text in bot.schedule:
                push(
                    at_ms,
                    KLASS_POST,
                    lambda at, pid=bot.bot_id, t=text: self.runtime.post(pid, t, at)[1],
                )
        tick_index = 1
        while tick_index * config.relay_interval_ms < config.time_limit_ms:
            push(
                tick_index * config.relay_interval_ms,
                KLASS_TICK,
                lambda at, idx=tick_index: self.runtime.relay_tick(at, idx)[1],
            )
            tick_index += 1
        push(config.time_limit_ms, KLASS_CLOSING, self.runtime.begin_closing)
        for bot in self.bots:
            if bot.answer:
                push(
                    config.time_limit_ms,
                    KLASS_ANSWER,
                    lambda at, pid=bot.bot_id, t=bot.answer: self.runtime.submit_answer(
                        pid, t, at
                    )
                    or [],
                )
        push(config.time_limit_ms + config.answer_grace_ms, KLASS_CLOSE, self.runtime.close)
        commands.sort(key=lambda c: (c[0], c[1], c[2]))

        for at_ms, _klass, _order, action in commands:
            target = self._t0 + at_ms / 1000.0 / self.time_scale
            delay = target - time.monotonic()
            if delay > 0:
                await asyncio.sleep(delay)
            async with self._lock:
                # a human post observed moments ago may already carry a later
                # stamp; scheduled stamps stay exact in pure scripted runs
                at_exec = max(at_ms, self.runtime.log.last_at_ms)
                try:
                    deliveries = action(at_exec) or []
                except CsiError as exc:
                    logger.warning("scheduled action at %d ms failed: %s", at_ms, exc)
                    deliveries = []
            await self._deliver(deliveries)

        self.log_path = self.out_dir / log_file_name(self.runtime.session.id)
        self.runtime.log.dump(self.log_path)
        for connection in list(self._connections.values()):
            try:
                await connection.close()
            except Exception:
                pass
        self._finished.set()

    async def run(self, host: str = "127.0.0.1", port: int = 8765) -> Path:
        """Serve until the session closes; returns the event-log path.

        ``port=0`` binds an ephemeral port, reported via ``bound_port``.
        """
        async with serve(self.handler, host, port) as server:
            self.bound_port = server.sockets[0].getsockname()[1]
            logger.info(
                "session %s listening on ws://%s:%d",
                self.runtime.session.id,
                host,
                self.bound_port,
            )
            print(f"listening on ws://{host}:{self.bound_port}", flush=True)
            if self.human_seats == 0:
                await self._maybe_start()
            await self._finished.wait()
        assert self.log_path is not None
        return self.log_path
