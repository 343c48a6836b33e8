import logging
from typing import Optional

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from dotenv import load_dotenv
load_dotenv()

from app.api.routes import router
from app.utils.config import Settings, load_settings

log = logging.getLogger("mobility.api")


# ---------------------- FastAPI Setup ----------------------
def create_app(settings: Optional[Settings] = None) -> FastAPI:
    """Read-only API over the artifacts in settings.OUTPUT_DIR."""
    settings = settings or load_settings()
    app = FastAPI(title="Mobility Networks")
    app.state.settings = settings
    app.include_router(router)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["GET"],
        allow_headers=["*"],
    )
    log.info("Serving artifacts from %s", settings.OUTPUT_DIR)
    return app


app = create_app()


if __name__ == "__main__":
    import uvicorn

    uvicorn.run("main:app", host=app.state.settings.API_HOST, port=app.state.settings.API_PORT, reload=False)
