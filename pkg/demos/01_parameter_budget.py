"""Where the parameters and arithmetic of a part ensemble go.

Every member shares one convolutional extractor layout; only the small
heads differ. Inference drops the localization head, so an ensemble of five
costs five extractors plus five classifiers.
"""
from petl.network import FEATURES, NetworkSpec, count_flops, count_macs, count_params

spec = NetworkSpec("part", "nose", 8)
counts = count_params(spec)
print("one part network (8 classes)")
for k, v in counts.items():
    if isinstance(v, int):
        print(f"  {k:<14}{v:>10,}")

total = sum(count_params(NetworkSpec("part", f, 8))["inference"] for f in FEATURES)
print(f"five-member ensemble at inference: {total:,}")

# landmark heads grow with the number of points regressed
for f in FEATURES:
    s = NetworkSpec("part", f, 8)
    print(f"  {f:<9} z={s.z:<3} stored params {count_params(s)['total']:,}")

macs = count_macs(spec)
print(f"conv MACs per 160x160 crop: {macs['conv']:,}")
print(f"FLOPs, full network: {count_flops(spec, 'full'):,}")
print(f"FLOPs, five classification heads only: {count_flops(spec, 'heads', 5):,}")
