"""Print parameter and mult-add counts for every scale and block variant.

    python3 scripts/complexity_table.py [--hr-size 1280x720]
"""
import argparse

from rfdn.arch import BlockVariant, Model, ModelConfig, count_mult_adds, count_params

REPORTED = {  # thousands of parameters
    (48, 2): 534, (48, 3): 541, (48, 4): 550,
    (52, 2): 626, (52, 3): 633, (52, 4): 643,
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--hr-size", default="1280x720")
    args = ap.parse_args()
    w, h = (int(v) for v in args.hr_size.split("x"))

    print(f"{'model':8} {'scale':>5} {'params':>9} {'reported':>9} {'dev %':>6} {'G mult-adds':>12}")
    for channels, name in ((48, "RFDN"), (52, "RFDN-L")):
        for scale in (2, 3, 4):
            model = Model(ModelConfig(scale=scale, channels=channels))
            n = count_params(model)
            ref = REPORTED[channels, scale] * 1000
            print(f"{name:8} {scale:>5} {n:>9} {ref:>9} {100 * (n - ref) / ref:>6.2f} "
                  f"{count_mult_adds(model, h, w) / 1e9:>12.2f}")

    print("\nblock variants at x4, 48 channels")
    for variant in BlockVariant:
        model = Model(ModelConfig(), variant)
        print(f"{variant.value:8} {count_params(model):>9} "
              f"{count_mult_adds(model, h, w) / 1e9:>8.2f}G")

    print("\ndistillation-rate sweep at x4, 48 channels")
    for rate, ref in ((0.25, 523), (0.5, 544), (0.75, 565)):
        n = count_params(Model(ModelConfig(distill_rate=rate)))
        print(f"rate {rate:<5} {n:>9}  reported {ref}K")


if __name__ == "__main__":
    main()
