"""Regenerates the small annotated sample videos used by the datagen tests."""
import json
import os

HERE = os.path.join(os.path.dirname(os.path.abspath(__file__)), "sources")
W = H = 16
BG = (30, 30, 30)


def write_ppm(path, pixels):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (W, H))
        f.write(bytes(v for row in pixels for px in row for v in px))


def write_pgm(path, mask):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (W, H))
        f.write(bytes(255 if v else 0 for row in mask for v in row))


def rle(mask):
    flat = [v for row in mask for v in row]
    counts, cur, run = [], 0, 0
    for v in flat:
        if v == cur:
            run += 1
        else:
            counts.append(run)
            cur, run = v, 1
    counts.append(run)
    return {"height": H, "width": W, "counts": counts}


def box_mask(x0, y0, x1, y1):
    return [[1 if x0 <= x < x1 and y0 <= y < y1 else 0 for x in range(W)] for y in range(H)]


def render(video, t, objects):
    pixels = [[BG for _ in range(W)] for _ in range(H)]
    for color, boxes in objects:
        x0, y0, x1, y1 = boxes[t]
        for y in range(y0, y1):
            for x in range(x0, x1):
                pixels[y][x] = color
    ref = "frames/%s/%02d.ppm" % (video, t)
    write_ppm(os.path.join(HERE, ref), pixels)
    return ref


def moving(x, y, size, dx, dy, frames):
    return [(x + dx * t, y + dy * t, x + dx * t + size, y + dy * t + size) for t in range(frames)]


def main():
    index = {"videos": []}

    # vidA: inline RLE masks
    objs = [((220, 40, 40), moving(1, 2, 4, 1, 0, 6)), ((40, 60, 220), moving(9, 1, 4, 0, 1, 6))]
    frames = [render("vidA", t, objs) for t in range(6)]
    index["videos"].append({
        "video_id": "vidA", "source": "mask_index", "width": W, "height": H, "frames": frames,
        "objects": [
            {"object_id": "o1", "category": "car", "masks": [rle(box_mask(*b)) for b in objs[0][1]]},
            {"object_id": "o2", "category": "ball", "masks": [rle(box_mask(*b)) for b in objs[1][1]]},
        ]})

    # vidB: PGM masks, three objects, one absent on the last frame
    objs = [((230, 200, 40), moving(0, 0, 3, 1, 1, 5)), ((60, 200, 60), moving(12, 2, 3, -1, 0, 5)),
            ((200, 60, 200), moving(4, 12, 3, 1, 0, 5))]
    frames = [render("vidB", t, objs) for t in range(5)]
    entry = {"video_id": "vidB", "source": "mask_index", "width": W, "height": H, "frames": frames, "objects": []}
    for k, (_, boxes) in enumerate(objs):
        masks = []
        for t, b in enumerate(boxes):
            if k == 2 and t == 4:
                masks.append(None)
                continue
            rel = "masks/vidB/o%d_%02d.pgm" % (k + 1, t)
            write_pgm(os.path.join(HERE, rel), box_mask(*b))
            masks.append(rel)
        entry["objects"].append({"object_id": "o%d" % (k + 1), "category": ["cat", "dog", "bird"][k], "masks": masks})
    index["videos"].append(entry)
    with open(os.path.join(HERE, "mask_index.json"), "w") as f:
        json.dump(index, f, indent=1)
        f.write("\n")

    # vidC: boxes only, eight frames; vidD: a single object
    rows = ["video_id,frame,frame_ref,width,height,object_id,category,x0,y0,x1,y1"]
    for video, objs, n in (
        ("vidC", [("p1", "person", (250, 150, 50), moving(1, 4, 5, 1, 0, 8)),
                  ("p2", "bike", (50, 150, 250), moving(10, 10, 5, -1, 0, 8))], 8),
        ("vidD", [("x1", "boat", (250, 250, 250), moving(3, 3, 6, 1, 1, 8))], 8),
    ):
        for t in range(n):
            ref = render(video, t, [(c, b) for _, _, c, b in objs])
            for oid, cat, _, boxes in objs:
                rows.append("%s,%d,%s,%d,%d,%s,%s,%d,%d,%d,%d" % ((video, t, ref, W, H, oid, cat) + boxes[t]))
    with open(os.path.join(HERE, "boxes.csv"), "w") as f:
        f.write("\n".join(rows) + "\n")

    good_a = ("USER: What is <region:o1> doing?\n"
              "ASSISTANT: <p>The red car</p>[SEG:o1] drives to the right.\n"
              "USER: And <region:o2>?\n"
              "ASSISTANT: <p>The blue ball</p>[SEG:o2] falls while <p>the car</p>[SEG:o1] passes.")
    bad_b = ("USER: What happens?\n"
             "ASSISTANT: <p>The cat</p> walks toward <p>the dog</p>[SEG:o9].")
    good_b = ("USER: What does <region:o1> do?\n"
              "ASSISTANT: <p>The yellow cat</p>[SEG:o1] walks diagonally.\n"
              "USER: Where is <region:o3> going?\n"
              "ASSISTANT: <p>The bird</p>[SEG:o3] glides right and leaves before <p>the dog</p>[SEG:o2] stops.")
    good_c = ("USER: Describe <region:p1>.\n"
              "ASSISTANT: <p>The person</p>[SEG:p1] walks right toward <p>the bike</p>[SEG:p2].\n"
              "USER: Do they meet?\n"
              "ASSISTANT: Yes, <p>the bike</p>[SEG:p2] rolls left and meets <p>the person</p>[SEG:p1].")
    fixture = {
        "vidA/description/o1": "A small red car driving steadily to the right.",
        "vidA/description/o2": "A blue ball that drops straight down.",
        "vidA/dialogue": good_a,
        "vidB/description/o1": "A yellow cat moving diagonally across the scene.",
        "vidB/description/o2": "A green dog walking left.",
        "vidB/description/o3": "A purple bird gliding right before flying away.",
        "vidB/dialogue": [bad_b, good_b],
        "vidC/description/p1": "A person walking to the right.",
        "vidC/description/p2": "A blue bike rolling to the left.",
        "vidC/dialogue": good_c,
    }
    with open(os.path.join(HERE, "fixture_replies.json"), "w") as f:
        json.dump(fixture, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main()
