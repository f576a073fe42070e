# app.py - Railway entry point for the Road Inspection Report Server
"""
Production entry point. Serves main.app; if the full server cannot be
imported, a minimal app still answers health checks.
"""

import logging
import os
import sys

os.environ.setdefault("PYTHONUNBUFFERED", "1")
os.environ.setdefault("PYTHONIOENCODING", "utf-8")

from core.logging_setup import configure_logging

configure_logging(os.environ.get("LOG_LEVEL", "INFO"))
logger = logging.getLogger("app")

try:
    logger.info("importing report server")
    from main import app
    logger.info("report server ready")
except Exception as e:
    logger.exception("error importing main: %s", e)
    # Minimal FastAPI app as fallback
    from fastapi import FastAPI
    from fastapi.middleware.cors import CORSMiddleware

    app = FastAPI(title="Road Inspection Report Server - Minimal Mode")

    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_credentials=True,
        allow_methods=["GET", "POST", "OPTIONS"],
        allow_headers=["*"],
    )

    @app.get("/")
    async def health_check():
        return {
            "status": "ok",
            "message": "Road Inspection Report Server is running (minimal mode)",
            "mode": "minimal",
        }

    @app.get("/health")
    async def railway_health():
        return {"status": "healthy", "service": "road-inspection-report-server"}

    @app.get("/debug")
    async def debug_info():
        return {
            "python_version": sys.version,
            "working_directory": os.getcwd(),
            "mode": "minimal_fallback",
        }

if __name__ == "__main__":
    port = int(os.environ.get("PORT", 8000))
    host = "0.0.0.0"
    logger.info("starting report server on %s:%d", host, port)

    import uvicorn
    uvicorn.run(app, host=host, port=port, log_level="info")
