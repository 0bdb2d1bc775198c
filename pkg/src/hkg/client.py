"""Thin HTTP client for the service API.

Without a server URL the client mounts the FastAPI app on an in-process
ASGI transport, so the CLI works standalone while still exercising the
exact request/response surface a remote deployment exposes.
"""

from __future__ import annotations

import httpx


class ServiceError(Exception):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


class ServiceClient:
    def __init__(self, server: str | None = None, timeout: float = 3600.0):
        if server is None:
            from .service.app import create_app

            transport = httpx.ASGITransport(app=create_app())
            self._client = httpx.AsyncClient(
                transport=transport, base_url="http://hkg.local", timeout=timeout
            )
        else:
            self._client = httpx.AsyncClient(base_url=server, timeout=timeout)

    async def post(self, path: str, payload: dict) -> dict:
        response = await self._client.post(path, json=payload)
        return self._unwrap(response)

    async def get(self, path: str) -> dict:
        response = await self._client.get(path)
        return self._unwrap(response)

    @staticmethod
    def _unwrap(response: httpx.Response) -> dict:
        if response.status_code < 400:
            return response.json()
        try:
            body = response.json()
        except ValueError:
            raise ServiceError("numeric", f"HTTP {response.status_code}: {response.text[:200]}")
        if "error" in body:
            err = body["error"]
            raise ServiceError(err.get("category", "data"), err.get("message", str(err)))
        # FastAPI request validation errors arrive as {"detail": [...]}
        raise ServiceError("usage", str(body.get("detail", body)))

    async def aclose(self) -> None:
        await self._client.aclose()
