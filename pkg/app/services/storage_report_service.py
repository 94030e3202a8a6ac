from app.models.requests import StorageReportRequest
from app.utils import emit_report
from lib.fusion.triggers import StorageReport, render_storage_report, storage_report


def storage_report_service(request: StorageReportRequest) -> StorageReport:
    report = storage_report(request.params, request.dtype, request.tasks, request.lora_params)
    emit_report(render_storage_report(report, request.report), request.out)
    return report
