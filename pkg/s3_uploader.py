"""S3 upload of run artifacts."""
from __future__ import annotations

import logging
import os
from typing import List, Optional

from config import Config


class S3Uploader:
    """Uploads the files of a run directory under the run's id prefix."""

    def __init__(self, config: Config):
        self.config = config
        self._client = None

    def _s3_client(self):
        if self._client is None:
            import boto3  # type: ignore

            self._client = boto3.client("s3", region_name=self.config.aws_region)
        return self._client

    def upload_file(self, file_path: str, key: str) -> Optional[str]:
        """
        Upload one file and return its S3 URL, or None on failure.

        Args:
            file_path: Local path to the file to upload
            key: Object key inside the configured bucket
        """
        try:
            from botocore.exceptions import BotoCoreError, ClientError  # type: ignore
        except ImportError:
            logging.error("boto3 not installed. Install with: pip install boto3")
            return None

        try:
            self._s3_client().upload_file(file_path, self.config.s3_bucket_name, key)
        except (ClientError, BotoCoreError) as e:
            logging.error("❌ Failed to upload %s to S3: %s", file_path, e)
            return None
        except Exception as e:
            logging.error("💥 Unexpected error during S3 upload: %s", e)
            return None
        s3_url = f"s3://{self.config.s3_bucket_name}/{key}"
        logging.debug("Uploaded to S3: %s", s3_url)
        return s3_url

    def upload_run_dir(self, run_dir: str) -> List[str]:
        """Upload every artifact of ``run_dir``; keys are ``<run_id>/<relative path>``.

        Returns:
            URLs of the files that were uploaded.
        """
        if not self.config.s3_bucket_name:
            logging.info("No S3 bucket configured. Artifacts saved locally only.")
            return []

        run_id = os.path.basename(os.path.normpath(run_dir))
        urls = []
        for root, _, files in os.walk(run_dir):
            for name in sorted(files):
                path = os.path.join(root, name)
                relative = os.path.relpath(path, run_dir).replace(os.sep, "/")
                url = self.upload_file(path, f"{run_id}/{relative}")
                if url:
                    urls.append(url)
        if urls:
            logging.info("Uploaded %d artifacts to s3://%s/%s/", len(urls),
                         self.config.s3_bucket_name, run_id)
        return urls
