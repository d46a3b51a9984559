"""Score exported masks against ground truth, video by video.

Evaluation follows the binary-merge protocol: all annotated classes collapse
to one foreground, predictions are compared per frame with IoU and pixel
accuracy, and each video reports the mean and standard deviation across its
frames. The CSV gains a final aggregate row; the optional plot is the usual
per-video bar chart with error bars.

Requires demos/01 and demos/02 to have run (uses their exports).

Run:  python3 demos/03_evaluation_report.py
"""

from pathlib import Path

from maskflow.dataset import load_video_dataset
from maskflow.metrics import evaluate_video, export_report, measure_throughput, plot_report
from maskflow.pngmask import load_mask_png
from maskflow.session import load_session

OUT = Path(__file__).parent / "demo_output"


def main():
    video = load_video_dataset(OUT / "datasets" / "drifting_shapes")

    # The merged exports from demo 02 are exactly the binary evaluation masks.
    preds = {}
    for frame_index in video.annotated_frames():
        path = OUT / "exported_masks" / f"drifting_shapes_f{frame_index:05d}_merged.png"
        preds[frame_index] = load_mask_png(path)

    record = evaluate_video(video.video_id, preds, video.ground_truth)
    print(
        f"{record.video_id}: IoU {record.iou_mean:.4f} ± {record.iou_std:.4f}, "
        f"PAC {record.pac_mean:.4f} ± {record.pac_std:.4f} "
        f"over {len(record.per_frame)} frames"
    )

    export_report([record], OUT / "metrics.csv")
    plot_report([record], OUT / "metrics.png")
    print("wrote", OUT / "metrics.csv", "and", OUT / "metrics.png")

    # Propagation timing was recorded per frame step; the throughput record
    # uses the interval convention fps = (n-1)/(last-first).
    session = load_session(OUT / "annotation_session.json")
    durations = session.propagation.per_frame_seconds
    stamps = [0.0]
    for d in durations:
        stamps.append(stamps[-1] + max(d, 1e-9))
    throughput = measure_throughput(stamps)
    print(f"propagation backend speed: {throughput.fps:.0f} frames/s over {throughput.frames_processed} steps")


if __name__ == "__main__":
    main()
