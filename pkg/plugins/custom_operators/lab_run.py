import logging
from typing import Any, Callable, Dict, Optional

from airflow.models import BaseOperator
from airflow.utils.decorators import apply_defaults

logger = logging.getLogger(__name__)


class LabRunOperator(BaseOperator):
    """
    Operator that runs one laboratory command and publishes its manifest.

    The run itself is delegated to `run_callable`, which takes the config
    document, an output directory and a worker count and returns the
    manifest dict (including `manifest_path`).
    """
    template_fields = ('out_dir',)

    @apply_defaults
    def __init__(
            self,
            config: Dict[str, Any],
            out_dir: str,
            run_callable: Callable[..., Dict[str, Any]],
            workers: Optional[int] = None,
            *args, **kwargs
    ):
        """
        Initialize the operator.

        Args:
            config: Run configuration document (parsed and validated at execute time)
            out_dir: Directory receiving the result files and manifest
            run_callable: Function performing the run
            workers: Worker count forwarded to run_callable
        """
        super().__init__(*args, **kwargs)
        self.config = config
        self.out_dir = out_dir
        self.run_callable = run_callable
        self.workers = workers

    def execute(self, context):
        """
        Execute the operator.

        Args:
            context: Airflow context

        Returns:
            Manifest dict of the run
        """
        command = self.config.get('command')
        self.log.info(f"Running laboratory command '{command}' into {self.out_dir}")

        manifest = self.run_callable(self.config, out_dir=self.out_dir, workers=self.workers)

        self.log.info(
            f"Run {manifest['run_id']} wrote {len(manifest['files'])} file(s): {sorted(manifest['files'])}"
        )
        context['ti'].xcom_push(key='run_manifest', value=manifest)

        return manifest
