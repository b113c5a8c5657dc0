"""Reference stream client: sends frames at a fixed cadence and collects the RESULT lines."""
import asyncio
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, List, Optional

from .errors import ClientError, ProtocolError
from .imaging import Frame, read_ppm
from .protocol import MessageType, encode_frame, read_message, write_message

logger = logging.getLogger(__name__)


@dataclass
class StreamSummary:
    lines: List[str] = field(default_factory=list)

    @property
    def gestures(self) -> List[str]:
        """Gesture labels in the order the server reported them."""
        # labels may contain spaces; the score is always the last field
        return [line[len("GESTURE "):].rsplit(" ", 1)[0] for line in self.lines if line.startswith("GESTURE ")]


async def _expect_result(reader: asyncio.StreamReader) -> List[str]:
    try:
        message = await read_message(reader)
    except EOFError as e:
        raise ClientError("server closed the connection mid-stream") from e
    except ProtocolError as e:
        raise ClientError(f"protocol error: {e}") from e
    if message.type is MessageType.ERROR:
        raise ClientError(f"server error: {message.text}")
    if message.type is not MessageType.RESULT:
        raise ClientError(f"unexpected {message.type.name} message from server")
    return message.text.splitlines()


async def stream_frames(host: str, port: int, frames: Iterable[Frame], fps: float = 5.0,
                        on_line: Optional[Callable[[str], None]] = None) -> StreamSummary:
    """Send every frame in lockstep with its RESULT, then END_STREAM; fps <= 0 disables pacing."""
    try:
        reader, writer = await asyncio.open_connection(host, port)
    except OSError as e:
        raise ClientError(f"cannot connect to {host}:{port}: {e}") from e

    summary = StreamSummary()
    interval = 1.0 / fps if fps > 0 else 0.0

    def record(lines: List[str]) -> None:
        for line in lines:
            summary.lines.append(line)
            if on_line is not None:
                on_line(line)

    try:
        for index, frame in enumerate(frames):
            started = time.monotonic()
            await write_message(writer, MessageType.FRAME, encode_frame(frame))
            record(await _expect_result(reader))
            delay = interval - (time.monotonic() - started)
            if delay > 0:
                await asyncio.sleep(delay)
        await write_message(writer, MessageType.END_STREAM)
        record(await _expect_result(reader))
    except (ConnectionResetError, BrokenPipeError) as e:
        raise ClientError(f"connection lost: {e}") from e
    finally:
        writer.close()
        try:
            await writer.wait_closed()
        except (ConnectionResetError, BrokenPipeError):
            pass
    logger.info(f"Stream finished: {len(summary.lines)} result lines, gestures {summary.gestures}")
    return summary


def read_frame_directory(directory) -> List[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise ClientError(f"frame directory not found: {directory}")
    return sorted(directory.glob("*.ppm"))


def stream_client(host: str, port: int, frame_dir, fps: float = 5.0,
                  on_line: Optional[Callable[[str], None]] = print) -> StreamSummary:
    paths = read_frame_directory(frame_dir)
    logger.info(f"Streaming {len(paths)} frames from {frame_dir} to {host}:{port} at {fps} fps")
    frames = (read_ppm(p) for p in paths)
    return asyncio.run(stream_frames(host, port, frames, fps, on_line))
