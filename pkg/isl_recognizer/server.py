"""
Frame-streaming recognition service.

Every connection gets its own RecognitionPipeline; the loaded models are
shared. Each FRAME is answered by exactly one RESULT, END_STREAM by one
final RESULT after which the connection is closed.
"""
import asyncio
import logging
import signal
from typing import Callable, Optional

from .config import HOST, PORT, PipelineConfig
from .errors import PipelineStageError, ProtocolError
from .persistence import ModelSet, load_models
from .pipeline import FaceProvider, RecognitionPipeline, gesture_line
from .protocol import MessageType, decode_frame, read_message, write_message
from . import utils
from .utils import log_critical_debug

logger = logging.getLogger(__name__)


class FrameServer:
    def __init__(self, cfg: PipelineConfig, models: ModelSet,
                 face_provider_factory: Optional[Callable[[], FaceProvider]] = None):
        self.cfg = cfg
        self.models = models
        self.face_provider_factory = face_provider_factory
        self._server: Optional[asyncio.AbstractServer] = None
        self.connections = 0

    def _new_pipeline(self) -> RecognitionPipeline:
        provider = self.face_provider_factory() if self.face_provider_factory else None
        return RecognitionPipeline(self.cfg, self.models, provider)

    async def handle_connection(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        peer = writer.get_extra_info("peername")
        self.connections += 1
        logger.info(f"Connection opened from {peer}")
        pipeline = self._new_pipeline()
        frames = 0
        try:
            while True:
                try:
                    message = await read_message(reader)
                except EOFError:
                    logger.info(f"Client {peer} closed the connection after {frames} frames")
                    break

                if message.type is MessageType.FRAME:
                    frame = decode_frame(message.payload)
                    result = await asyncio.to_thread(pipeline.process_frame, frame)
                    lines = [result.result_line()]
                    if result.gesture is not None:
                        lines.append(gesture_line(result.gesture))
                    frames += 1
                    log_critical_debug(f"{peer} frame {result.frame_index}: {' | '.join(lines)}")
                    await write_message(writer, MessageType.RESULT, "\n".join(lines).encode("utf-8"))
                elif message.type is MessageType.END_STREAM:
                    decision = await asyncio.to_thread(pipeline.finish)
                    text = gesture_line(decision) if decision is not None else "NONE"
                    await write_message(writer, MessageType.RESULT, text.encode("utf-8"))
                    logger.info(f"Stream from {peer} ended after {frames} frames: {text}")
                    break
                else:
                    raise ProtocolError(f"unexpected {message.type.name} message from client")
        except ProtocolError as e:
            logger.warning(f"Protocol error from {peer}: {e}")
            await self._send_error(writer, str(e))
        except PipelineStageError as e:
            logger.error(f"Pipeline failure for {peer}: {e}", exc_info=True)
            await self._send_error(writer, str(e))
        except (ConnectionResetError, BrokenPipeError) as e:
            logger.info(f"Connection to {peer} lost: {e}")
        except Exception as e:
            logger.error(f"Unexpected error serving {peer}: {e}", exc_info=True)
            await self._send_error(writer, "internal server error")
        finally:
            writer.close()
            try:
                await writer.wait_closed()
            except (ConnectionResetError, BrokenPipeError):
                pass

    @staticmethod
    async def _send_error(writer: asyncio.StreamWriter, text: str) -> None:
        try:
            await write_message(writer, MessageType.ERROR, text.encode("utf-8"))
        except (ConnectionResetError, BrokenPipeError):
            pass

    async def start(self, host: str = HOST, port: int = PORT):
        self._server = await asyncio.start_server(self.handle_connection, host, port)
        return self._server

    @property
    def port(self) -> int:
        if self._server is None or not self._server.sockets:
            raise RuntimeError("server is not running")
        return self._server.sockets[0].getsockname()[1]

    async def close(self) -> None:
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
            self._server = None


async def _serve_forever(server: FrameServer, host: str, port: int) -> None:
    await server.start(host, port)
    logger.info(f"Listening on {host}:{server.port}")
    stop = asyncio.Event()
    loop = asyncio.get_running_loop()
    for sig in (signal.SIGINT, signal.SIGTERM):
        try:
            loop.add_signal_handler(sig, stop.set)
        except NotImplementedError:
            pass
    try:
        await stop.wait()
        logger.info("Shutting down...")
    finally:
        await server.close()
        logger.info("Shutdown complete.")


def serve(cfg: PipelineConfig, model_dir, host: str = HOST, port: int = PORT) -> None:
    """Load the models (failing fast) and run the service until interrupted."""
    models = load_models(model_dir)
    server = FrameServer(cfg, models)

    print(f"🚀 Starting ISL recognition server on {host}:{port} with verbosity level {utils.VERBOSE_LEVEL}")
    print("   Level 0: Minimal output")
    print("   Level 1: Connections and gesture decisions")
    print("   Level 2: Detailed per-frame pipeline logging")
    print("   Level 3: Full debug with per-frame results")

    asyncio.run(_serve_forever(server, host, port))
