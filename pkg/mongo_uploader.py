"""MongoDB storage of run manifests."""
from __future__ import annotations

import logging
from datetime import datetime
from typing import Any, Dict, List, Optional

from config import Config

try:
    from zoneinfo import ZoneInfo  # Python 3.9+
except ImportError:  # pragma: no cover
    from backports.zoneinfo import ZoneInfo  # type: ignore

SERVER_TIMEOUT_MS = 5000


class MongoUploader:
    """Upserts run manifests keyed by run_id."""

    def __init__(self, config: Config):
        self.config = config
        self.client = None
        self.collection = None

    def _missing_setting(self) -> Optional[str]:
        settings = (
            ("MONGO_DATABASE_NAME", self.config.mongo_database_name),
            ("MONGO_COLLECTION_NAME", self.config.mongo_collection_name),
        )
        for name, value in settings:
            if not value:
                return name
        return None

    def connect(self) -> bool:
        """
        Open the manifest collection, creating the run_id index on first use.

        Returns:
            True when the collection is ready, False when uploads must be skipped
        """
        if self.collection is not None:
            return True
        if not self.config.mongo_connection_string:
            logging.info("No MongoDB connection string configured. Manifests kept locally only.")
            return False
        missing = self._missing_setting()
        if missing:
            logging.error("%s is required to store manifests in MongoDB.", missing)
            return False

        try:
            import pymongo  # type: ignore
        except ImportError:
            logging.error("pymongo not installed. Install with: pip install pymongo")
            return False

        try:
            self.client = pymongo.MongoClient(self.config.mongo_connection_string,
                                              serverSelectionTimeoutMS=SERVER_TIMEOUT_MS)
            self.client.admin.command("ping")
            collection = self.client[self.config.mongo_database_name][self.config.mongo_collection_name]
            collection.create_index("run_id", unique=True)
            collection.create_index([("experiment", 1), ("status", 1)])
        except Exception as e:
            logging.error("❌ Cannot reach MongoDB: %s", e)
            return False
        self.collection = collection
        logging.info("Connected to MongoDB collection %s.%s",
                     self.config.mongo_database_name, self.config.mongo_collection_name)
        return True

    def upload_manifests(self, manifests: List[Dict[str, Any]]) -> Dict[str, int]:
        """
        Upsert manifests by run_id; a manifest without run_id counts as an error.

        Returns:
            Counts {"inserted", "updated", "errors"}
        """
        counts = {"inserted": 0, "updated": 0, "errors": 0}
        if not self.connect():
            return counts

        stored_at = datetime.now(ZoneInfo("UTC"))
        for manifest in manifests:
            run_id = manifest.get("run_id") if isinstance(manifest, dict) else None
            if not run_id:
                logging.warning("Skipping manifest without run_id")
                counts["errors"] += 1
                continue
            try:
                outcome = self.collection.replace_one(
                    {"run_id": run_id}, self._as_document(manifest, stored_at), upsert=True)
            except Exception as e:
                logging.error("Failed to store manifest %s: %s", run_id, e)
                counts["errors"] += 1
                continue
            key = "inserted" if outcome.upserted_id else "updated"
            counts[key] += 1
            logging.debug("%s manifest %s", key.capitalize(), run_id)

        logging.info("📊 MongoDB: %d inserted, %d updated, %d errors",
                     counts["inserted"], counts["updated"], counts["errors"])
        if counts["errors"]:
            logging.warning("⚠️ Some manifests were not stored. Check logs for details.")
        return counts

    @staticmethod
    def _as_document(manifest: Dict[str, Any], stored_at: datetime) -> Dict[str, Any]:
        """Manifest copy with started_at as a BSON date for range queries."""
        doc = dict(manifest, run_id=str(manifest["run_id"]), stored_at=stored_at)
        started = doc.get("started_at")
        if isinstance(started, str) and started:
            try:
                parsed = datetime.fromisoformat(started.replace("Z", "+00:00"))
            except ValueError:
                logging.debug("Keeping unparsable started_at for %s", doc["run_id"])
            else:
                doc["started_at"] = parsed if parsed.tzinfo else parsed.replace(tzinfo=ZoneInfo("UTC"))
        return doc

    def close(self) -> None:
        if self.client:
            self.client.close()
            self.client = None
            self.collection = None
            logging.debug("MongoDB connection closed")

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.close()
