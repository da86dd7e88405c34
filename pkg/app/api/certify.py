import hashlib
import os
from typing import List, Optional

import httpx
from fastapi import APIRouter, HTTPException
from fastapi.concurrency import run_in_threadpool
from pydantic import BaseModel, HttpUrl, model_validator

from app.core.config import settings
from app.core.errors import CertificationError, ConfigValidationError, ConstantsUnavailableError
from app.core.logging_config import app_logger, error_logger
from app.models.certification import CertifyConfig
from app.models.constants import ConstantTable, LatticeTruncation
from app.services import certification, report_service, tame_constants

router = APIRouter()


class ConstantsRequest(BaseModel):
    dim: int
    n: float
    orders: List[float] = []
    H: Optional[int] = None
    Kmax: Optional[int] = None
    tail_margin: Optional[float] = None
    allow_compute: bool = True


class CertifyRequest(BaseModel):
    config: Optional[CertifyConfig] = None
    config_url: Optional[HttpUrl] = None
    validate_bounds: bool = False

    @model_validator(mode="after")
    def check_source(self) -> "CertifyRequest":
        if (self.config is None) == (self.config_url is None):
            raise ValueError("Give exactly one of 'config' and 'config_url'")
        return self


def _status_for(error: CertificationError) -> int:
    if isinstance(error, ConfigValidationError):
        return 422
    if isinstance(error, ConstantsUnavailableError):
        return 503
    return 500


def _file_urls(out_dir: str, paths: dict) -> dict:
    relative = os.path.relpath(out_dir, "media").replace(os.sep, "/")
    return {key: f"{settings.BASE_URL}/media/{relative}/{os.path.basename(path)}" for key, path in paths.items()}


async def _fetch_config(url: str) -> dict:
    async with httpx.AsyncClient() as client:
        try:
            response = await client.get(url)
            response.raise_for_status()
            data = response.json()
        except httpx.HTTPStatusError as e:
            raise HTTPException(status_code=400, detail=f"Failed to fetch configuration: {e}")
        except Exception as e:
            raise HTTPException(status_code=400, detail=f"Invalid URL or non-JSON response: {e}")
    if isinstance(data, list) and data:
        data = data[0]
    if not isinstance(data, dict):
        raise HTTPException(status_code=400, detail="Invalid JSON structure for a configuration")
    return data


@router.post("/constants", response_model=ConstantTable)
async def constants(request: ConstantsRequest):
    app_logger.info(f"Constants requested: d={request.dim} n={request.n} orders={request.orders}")
    try:
        defaults = LatticeTruncation()
        trunc = LatticeTruncation(
            sum_radius=request.H or defaults.sum_radius,
            sup_radius=request.Kmax or defaults.sup_radius,
            tail_margin=request.tail_margin or defaults.tail_margin,
        )
        pairs = tame_constants.required_pairs(request.n, request.orders)
        return await run_in_threadpool(
            tame_constants.load_or_compute, request.dim, pairs, trunc, None, request.allow_compute,
        )
    except ConstantsUnavailableError as e:
        raise HTTPException(status_code=503, detail=str(e))
    except ValueError as e:
        raise HTTPException(status_code=422, detail=str(e))


@router.post("/certify")
async def certify(request: CertifyRequest):
    if request.config is not None:
        config = request.config
    else:
        raw = await _fetch_config(str(request.config_url))
        try:
            config = certification.parse_config(raw)
        except ConfigValidationError as e:
            raise HTTPException(status_code=422, detail=str(e))

    run_id = hashlib.sha256(config.model_dump_json().encode("utf-8")).hexdigest()[:16]
    out_dir = os.path.join(settings.CERTIFICATES_DIR, run_id)
    app_logger.info(f"Certification requested over HTTP, run {run_id}")

    try:
        report = await run_in_threadpool(
            certification.run_certification, config, None, request.validate_bounds,
        )
    except CertificationError as e:
        error_logger.error(f"Run {run_id} failed: {e}")
        detail = {"error": str(e)}
        if e.partial_report is not None:
            paths = report_service.emit_outputs(e.partial_report, out_dir)
            detail["files"] = _file_urls(out_dir, paths)
        raise HTTPException(status_code=_status_for(e), detail=detail)
    except ValueError as e:
        error_logger.error(f"Run {run_id} rejected: {e}")
        raise HTTPException(status_code=422, detail=str(e))

    paths = report_service.emit_outputs(report, out_dir, save_trace=config.save_trace)
    return {
        "run_id": run_id,
        "t_c": "inf" if report.t_c is not None and report.t_c == float("inf") else report.t_c,
        "certified": report.certified,
        "validation_passed": report.validation.passed if report.validation else None,
        "files": _file_urls(out_dir, paths),
    }
