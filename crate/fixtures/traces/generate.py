"""Regenerates the shared trace fixture corpus and its expected.csv.

Every file is checked by the Rust ingest path against the code listed in
expected.csv (0 = accepted). Any reimplementation of the trace validator
must produce the same codes.
"""
import math
import os

HERE = os.path.dirname(os.path.abspath(__file__))
FORMAT, DATA, DURATION = 1, 2, 3


def g9(v):
    s = "%.9g" % v
    return "0" if s == "-0" and v == 0 else s


def rows(frames, rois, fps, hr=1.2, phase=0.0):
    out = []
    for f in range(frames):
        t = f / fps
        row = []
        for r in range(rois):
            p = math.sin(2 * math.pi * hr * t + phase + 0.3 * r)
            row += [120 + 0.4 * p + r, 90 + 1.0 * p + r, 70 + 0.3 * p + r]
        out.append(",".join(g9(v) for v in row))
    return out


def header(fps, subject, video, rois, frames, magic="pulsekin-trace", version="v1"):
    return f"# {magic} {version} fps={g9(fps)} subject={subject} video={video} rois={rois} frames={frames}"


def trace(fps=50, rois=2, frames=150, subject="s01", video="v01", **kw):
    return "\n".join([header(fps, subject, video, rois, frames, **kw)] + rows(frames, rois, fps)) + "\n"


def main():
    cases = {}

    def put(name, text, code):
        cases[name] = code
        with open(os.path.join(HERE, name), "w", newline="") as f:
            f.write(text)

    # Accepted.
    put("valid_01_basic.csv", trace(), 0)
    put("valid_02_one_roi.csv", trace(rois=1), 0)
    put("valid_03_hundred_rois.csv", trace(rois=100, frames=130), 0)
    put("valid_04_30fps.csv", trace(fps=30, frames=90), 0)
    put("valid_05_fractional_fps.csv", trace(fps=29.97, frames=80), 0)
    put("valid_06_exact_minimum.csv", trace(fps=50, frames=125), 0)
    put("valid_07_long.csv", trace(fps=25, frames=500, rois=3), 0)
    put("valid_08_ids_with_dashes.csv", trace(subject="fam-03_M", video="take.2"), 0)
    neg = header(50, "s02", "v02", 1, 130) + "\n" + "\n".join(
        ",".join(g9(v) for v in (-1.5e-3, 2.25e+02, 1e-07)) for _ in range(130)) + "\n"
    put("valid_09_exponents_and_negatives.csv", neg, 0)
    put("valid_10_no_trailing_newline.csv", trace().rstrip("\n"), 0)
    flat = header(50, "s03", "v03", 1, 130) + "\n" + "\n".join(["100,100,100"] * 130) + "\n"
    put("valid_11_constant_intensity.csv", flat, 0)
    put("valid_12_high_fps.csv", trace(fps=120, frames=310), 0)

    # Rejected.
    put("invalid_01_empty.csv", "", FORMAT)
    put("invalid_02_wrong_magic.csv", trace(magic="rgb-trace"), FORMAT)
    put("invalid_03_wrong_version.csv", trace(version="v2"), FORMAT)
    put("invalid_04_missing_fps.csv", trace().replace(" fps=50", "", 1), FORMAT)
    put("invalid_05_zero_fps.csv", trace().replace("fps=50", "fps=0", 1), FORMAT)
    put("invalid_06_too_few_rows.csv", "\n".join(trace().split("\n")[:-5]) + "\n", FORMAT)
    put("invalid_07_too_many_rows.csv", trace() + trace().split("\n")[1] + "\n", FORMAT)
    lines = trace().split("\n")
    lines[10] = lines[10].rsplit(",", 1)[0]
    put("invalid_08_short_row.csv", "\n".join(lines), FORMAT)
    lines = trace().split("\n")
    lines[20] = lines[20].replace(",", ",abc,", 1).replace(",abc,", ",abc", 1)
    put("invalid_09_text_cell.csv", "\n".join(lines), FORMAT)
    lines = trace().split("\n")
    cells = lines[30].split(",")
    cells[4] = "nan"
    lines[30] = ",".join(cells)
    put("invalid_10_nan_cell.csv", "\n".join(lines), DATA)
    lines = trace().split("\n")
    cells = lines[5].split(",")
    cells[0] = "inf"
    lines[5] = ",".join(cells)
    put("invalid_11_inf_cell.csv", "\n".join(lines), DATA)
    put("invalid_12_too_short.csv", trace(fps=50, frames=100), DURATION)
    put("invalid_13_crlf.csv", trace().replace("\n", "\r\n"), FORMAT)
    put("invalid_14_duplicate_field.csv", trace().replace(" rois=2", " rois=2 rois=2", 1), FORMAT)
    put("invalid_15_no_header.csv", "\n".join(trace().split("\n")[1:]), FORMAT)
    put("invalid_16_zero_rois.csv", trace().replace("rois=2", "rois=0", 1), FORMAT)

    with open(os.path.join(HERE, "expected.csv"), "w", newline="") as f:
        f.write("file,code\n")
        for name in sorted(cases):
            f.write(f"{name},{cases[name]}\n")


if __name__ == "__main__":
    main()
