"""Independent brute-force oracles used to cross-check the library.

Everything here is deliberately naive pure Python (per-pixel loops, BFS),
sharing no code path with the implementations under test.
"""

from collections import deque


def pixel_counts(pred, gt):
    """Walk every pixel once; returns (intersection, union, correct, total)."""
    intersection = union = correct = total = 0
    for p_row, g_row in zip(pred.tolist(), gt.tolist()):
        for p, g in zip(p_row, g_row):
            total += 1
            if p and g:
                intersection += 1
            if p or g:
                union += 1
            if p == g:
                correct += 1
    return intersection, union, correct, total


def iou_oracle(pred, gt):
    intersection, union, _, _ = pixel_counts(pred, gt)
    return 1.0 if union == 0 else intersection / union


def pac_oracle(pred, gt):
    _, _, correct, total = pixel_counts(pred, gt)
    return correct / total


def mean_std_two_pass(values):
    n = len(values)
    mean = sum(values) / n
    variance = sum((v - mean) ** 2 for v in values) / n
    return mean, variance**0.5


def flood_fill_oracle(frame, seed_x, seed_y, tolerance):
    """BFS 4-connected component of pixels within per-channel tolerance
    of the seed pixel's color. Returns a set of (x, y) pairs."""
    height, width = frame.shape[:2]
    seed_color = [int(c) for c in frame[seed_y, seed_x]]

    def matches(x, y):
        return all(abs(int(frame[y, x][c]) - seed_color[c]) <= tolerance for c in range(3))

    visited = {(seed_x, seed_y)}
    queue = deque([(seed_x, seed_y)])
    while queue:
        x, y = queue.popleft()
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nx, ny = x + dx, y + dy
            if 0 <= nx < width and 0 <= ny < height and (nx, ny) not in visited and matches(nx, ny):
                visited.add((nx, ny))
                queue.append((nx, ny))
    return visited


def mask_to_pixel_set(mask):
    return {(x, y) for y, row in enumerate(mask.tolist()) for x, value in enumerate(row) if value}


def centroid(mask):
    pixels = mask_to_pixel_set(mask)
    n = len(pixels)
    return (sum(x for x, _ in pixels) / n, sum(y for _, y in pixels) / n)
