"""Write a synthetic binary classification set in LIBSVM format.

    python3 scripts/make_synthetic_data.py out.svm --rows 270 --cols 13 --seed 0
"""
import argparse

from qunac.libsvm import dump_libsvm, synthetic_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("path")
    ap.add_argument("--rows", type=int, default=270)
    ap.add_argument("--cols", type=int, default=13)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    data = synthetic_dataset(args.rows, args.cols, args.seed)
    with open(args.path, "w") as fh:
        dump_libsvm(data.X, data.y, fh)
    print(f"wrote {data.m} rows x {data.n} features to {args.path}")


if __name__ == "__main__":
    main()
