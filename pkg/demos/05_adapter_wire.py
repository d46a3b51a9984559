"""Attach a segmentation backend over the wire protocol.

A real promptable video model runs in its own process (often a GPU box) and
speaks a small length-prefixed binary protocol over a local stream socket:
frames are referenced by index against a dataset path exchanged at
handshake, masks come back run-length encoded. Here the "external model" is
just the reference backend served by `AdapterServer`, which is exactly how
the tests mock a model server.

Requires the dataset from demos/01_synthetic_fixture.py.

Run:  python3 demos/05_adapter_wire.py
"""

import tempfile
from pathlib import Path

import numpy as np

from maskflow.backend import AdapterServer, ExternalBackend, PromptPoint, ReferenceBackend
from maskflow.session import Session
from maskflow.dataset import load_video_dataset

OUT = Path(__file__).parent / "demo_output"


def main():
    dataset_dir = OUT / "datasets" / "drifting_shapes"
    socket_path = str(Path(tempfile.mkdtemp()) / "adapter.sock")

    with AdapterServer(socket_path, ReferenceBackend()) as server:
        # The client side is a normal backend; sessions cannot tell the
        # difference between in-process and over-the-wire prediction.
        backend = ExternalBackend(server.socket_path, str(dataset_dir))
        video = load_video_dataset(dataset_dir)
        session = Session(video, backend, backend_name="external", video_dir=str(dataset_dir))

        object_id = session.add_object(0, 2)
        mask = session.add_point(object_id, 0, 12, 14, "positive")
        print(f"mask over the wire: {int(mask.sum())} px")

        job = session.propagate().wait()
        print(f"propagation via adapter: {job.state}, {len(session.propagation.masks)} masks")

        # Bit-identical to running the backend in-process:
        local = ReferenceBackend().predict_frame(
            video.frame(0),
            [PromptPoint(x=12, y=14, polarity="positive", frame_index=0, object_id=object_id)],
        )
        print("matches in-process reference:", np.array_equal(mask, local))
        backend.close()


if __name__ == "__main__":
    main()
