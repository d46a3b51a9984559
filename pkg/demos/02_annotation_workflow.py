"""The five-verb interactive annotation workflow, scripted.

The engine mirrors how an annotator works in the UI:

  1. create an object on its anchor frame and click positive points
     (negative points carve oversegmentation away),
  2. visualize the composite to check the masks,
  3. propagate every object across the remaining frames,
  4. export per-object (and merged) binary mask PNGs,
  5. restart whatever is not good enough.

Requires the dataset from demos/01_synthetic_fixture.py.

Run:  python3 demos/01_synthetic_fixture.py && python3 demos/02_annotation_workflow.py
"""

from pathlib import Path

import numpy as np
from PIL import Image

from maskflow.session import create_session, save_session

OUT = Path(__file__).parent / "demo_output"


def main():
    session = create_session(OUT / "datasets" / "drifting_shapes")
    print(f"session {session.session_id}: {session.video.frame_count} frames")

    # Step 1 — one object per shape, a single positive click each.
    red = session.add_object(0, 2, "Pupil")
    green = session.add_object(0, 9, "Phacoemulsifier Tip")
    blue = session.add_object(0, 5, "Gauge Sizes")
    for object_id, (x, y) in ((red, (12, 14)), (green, (76, 54)), (blue, (20, 34))):
        mask = session.add_point(object_id, 0, x, y, "positive")
        print(f"  object {object_id}: preview mask {int(mask.sum())} px")

    # A wrong click is cheap to fix: a negative point removes that pixel's
    # component, and reannotate() wipes the frame's prompts entirely.
    session.add_point(red, 0, 0, 0, "negative")  # carve off the background corner
    session.reannotate(red, 0)
    session.add_point(red, 0, 12, 14, "positive")

    # Step 2 — composite of all current masks, in deterministic palette colors.
    composite = session.visualize(0)
    Image.fromarray(composite.image).save(OUT / "composite_frame0.png")
    print("legend:", [(oid, name) for oid, name, _ in composite.legend])

    # Step 3 — track every object to the last frame; progress is observable.
    job = session.propagate()
    job.wait()
    print(f"propagation {job.state}, progress {job.progress}")
    for obj in session.objects.values():
        print(f"  object {obj.object_id}: {obj.status}")

    # Step 4 — binary PNGs (255 = foreground) plus manifest.csv.
    entries = session.export_masks(OUT / "exported_masks", merged=True)
    per_object = sum(1 for e in entries if e.object_id is not None)
    merged = sum(1 for e in entries if e.object_id is None)
    print(f"exported {per_object} per-object files + {merged} merged files")

    # Sessions persist losslessly, masks included (RLE inside JSON).
    save_session(session, OUT / "annotation_session.json")
    print("saved session to", OUT / "annotation_session.json")

    # Step 5 — restart one object; its ids are never reused.
    session.restart(blue)
    print(f"object {blue} cleared; next object id would be {session._next_object_id}")


if __name__ == "__main__":
    main()
