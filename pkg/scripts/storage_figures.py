from lib.fusion.triggers import render_storage_report, storage_report
from lib.utils.enums import DType

print("Script is running")

# A model with 570.86 MB of float32 weights
MIB = 1 << 20
param_count = round(570.86 * MIB / 4)
task_count = 11

report = storage_report(param_count, DType.r32, task_count)
print(render_storage_report(report))

# Same model with low-rank adapters of roughly 0.2M parameters per task
low_rank = storage_report(param_count, DType.r32, task_count, lora_params=221184)
print(render_storage_report(low_rank))

print(f"Mask storage per task: {report.mask_bytes_per_task / MIB:.2f} MB")
print(f"Mask storage relative to one dense model: {report.mask_to_dense_ratio:.4%}")
