"""Regenerates the stored-prediction files used by the CLI eval tests.

mixed.jsonl has four samples with hand-computed grounding scores:
  exact match          IoU 1.00, recall 1
  quarter overlap      IoU 0.25, recall 0
  one of two objects   IoU (1 + 0) / 2 = 0.5, recall 0.5
  no prediction        IoU 0, recall 0
so mIoU = 1.75 / 4 = 0.4375 and recall = 1.5 / 4 = 0.375.
"""
import json
import os

HERE = os.path.dirname(os.path.abspath(__file__))
W = H = 8
FRAMES = 2


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


def box(x0, y0, x1, y1):
    return rle([[1 if x0 <= x < x1 and y0 <= y < y1 else 0 for x in range(W)] for y in range(H)])


BOXES = {"o1": (0, 0, 4, 4), "o2": (4, 4, 8, 8)}
COLORS = {"o1": "#ff0000", "o2": "#00ff00"}
NAMES = {"o1": "the red square", "o2": "the green square"}


def record(vid, refs, prediction):
    answer = " and ".join("<p>%s</p>[SEG:%s]" % (NAMES[o], o) for o in refs) + " move apart."
    return {
        "video_id": vid,
        "source": "fixture",
        "sampled_frames": ["fixture://%s/%d" % (vid, t) for t in range(FRAMES)],
        "objects": [
            {"object_id": o, "color_tag": COLORS[o], "category": "square", "rle_masks": [box(*BOXES[o])] * FRAMES}
            for o in sorted(BOXES)
        ],
        "descriptions": [],
        "conversation": [
            {"role": "user", "text": "What happens to " + " and ".join("<region:%s>" % o for o in refs) + "?"},
            {"role": "assistant", "text": answer},
        ],
        "prediction": prediction,
    }


def track(phrase, b):
    return {"phrase": phrase, "rle_masks": [box(*b)] * FRAMES}


def perfect(vid, refs):
    answer = record(vid, refs, None)["conversation"][1]["text"]
    return record(vid, refs, {"text": answer, "tracks": [track(NAMES[o], BOXES[o]) for o in refs]})


def empty(vid, refs):
    return record(vid, refs, {"text": "", "tracks": []})


def write(name, records):
    with open(os.path.join(HERE, name), "w") as f:
        for r in records:
            f.write(json.dumps(r, separators=(",", ":")) + "\n")


if __name__ == "__main__":
    write("perfect.jsonl", [perfect("p1", ["o1"]), perfect("p2", ["o1", "o2"])])
    write("empty.jsonl", [empty("e1", ["o1"]), empty("e2", ["o1", "o2"])])
    write(
        "mixed.jsonl",
        [
            perfect("m1", ["o1"]),
            record("m2", ["o1"], {"text": "the red square moves.", "tracks": [track("the red square", (0, 0, 4, 1))]}),
            record("m3", ["o1", "o2"], {"text": "the red square moves.", "tracks": [track("the red square", BOXES["o1"])]}),
            empty("m4", ["o1"]),
        ],
    )
