import json
import os
import logging
from typing import Callable, Dict, Any, Optional

import pandas as pd
from airflow.models import BaseOperator
from airflow.utils.decorators import apply_defaults

logger = logging.getLogger(__name__)


def read_result_table(data_path: str, table: Optional[str] = None) -> pd.DataFrame:
    """
    Read one result table from a CSV file or from the `tables` section of a JSON result.

    Raises:
        ValueError: For unsupported formats or a JSON result without the table
    """
    file_ext = os.path.splitext(data_path)[1].lower()

    if file_ext == '.csv':
        return pd.read_csv(data_path, dtype={'run_id': str})
    if file_ext == '.json':
        with open(data_path, 'r', encoding='utf-8') as handle:
            document = json.load(handle)
        tables = document.get('tables', {})
        if table not in tables:
            raise ValueError(f"Result {data_path} has no table '{table}'")
        df = pd.DataFrame(tables[table])
        df.insert(0, 'run_id', document.get('run_id'))
        return df
    raise ValueError(f"Unsupported file format: {file_ext}")


class ResultQualityOperator(BaseOperator):
    """
    Operator that runs quality checks on an emitted result table.

    This operator reads a result file, runs a validation function on it,
    and raises an exception if the validation fails.
    """
    template_fields = ('data_path',)

    @apply_defaults
    def __init__(
            self,
            data_path: str,
            validation_callable: Callable,
            table: Optional[str] = None,
            validation_kwargs: Optional[Dict[str, Any]] = None,
            *args, **kwargs
    ):
        """
        Initialize the operator.

        Args:
            data_path: Path to the result file to validate
            validation_callable: Function to call for validation
            table: Result table name (passed to validation_callable)
            validation_kwargs: Additional keyword arguments to pass to validation_callable
        """
        super().__init__(*args, **kwargs)
        self.data_path = data_path
        self.validation_callable = validation_callable
        self.table = table
        self.validation_kwargs = validation_kwargs or {}

    def execute(self, context):
        """
        Execute the operator.

        Args:
            context: Airflow context

        Returns:
            Dict with validation results

        Raises:
            ValueError: If validation fails
        """
        self.log.info(f"Running result validation on {self.data_path}")

        if not os.path.exists(self.data_path):
            raise FileNotFoundError(f"Result file not found: {self.data_path}")

        df = read_result_table(self.data_path, self.table)

        kwargs = {**self.validation_kwargs}
        if self.table:
            kwargs['table'] = self.table

        is_valid, results = self.validation_callable(df, **kwargs)

        self.log.info(f"Validation results: {results}")

        context['ti'].xcom_push(key='validation_metrics', value=results.get('metrics', {}))

        for warning in results.get('warnings', []):
            self.log.warning(f"Validation warning: {warning}")

        if not is_valid:
            error_message = "\n".join(results.get('errors', ['Validation failed']))
            raise ValueError(f"Result validation failed: {error_message}")

        self.log.info("Result validation passed")

        return results
