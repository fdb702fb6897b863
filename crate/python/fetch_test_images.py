"""Fetch the 512x512 Lena test image and store it as 8-bit grayscale PGM.

The image is taken from the scikit-image 0.9.3 source distribution, which
was the last release to ship it. Output goes to data/images/lena.pgm, which
is git-ignored; the repository itself only ships synthetic phantoms.

Usage: python3 python/fetch_test_images.py [--out data/images]
"""

import argparse
import io
import pathlib
import tarfile
import urllib.request

SDIST = (
    "https://pypi.org/packages/71/e7/"
    "881fa2b6195141a2b91035b63ff78a6f11c5dbec5d39b012e9fadc193a95/"
    "scikit-image-0.9.3.tar.gz"
)
MEMBER = "scikit-image-0.9.3/skimage/data/lena.png"


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data/images")
    parser.add_argument("--sdist", help="local copy of the sdist tarball")
    args = parser.parse_args()

    if args.sdist:
        blob = pathlib.Path(args.sdist).read_bytes()
    else:
        with urllib.request.urlopen(SDIST, timeout=120) as resp:
            blob = resp.read()

    from PIL import Image

    with tarfile.open(fileobj=io.BytesIO(blob), mode="r:gz") as tar:
        png = tar.extractfile(MEMBER).read()
    img = Image.open(io.BytesIO(png)).convert("L")
    assert img.size == (512, 512), img.size

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dest = out / "lena.pgm"
    img.save(dest, format="PPM")
    print(f"wrote {dest}")


if __name__ == "__main__":
    main()
