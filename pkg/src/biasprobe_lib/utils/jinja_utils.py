import math

from jinja2 import Environment, FileSystemLoader
from pathlib import Path
from typing import Dict, Optional


class JinjaEnvironment:
    """
    Jinja2 environment over the report templates, with number formatting filters.
    """

    def __init__(self, template_dir: Path):
        """
        Loads templates from ``template_dir`` and registers the fmt, pct and pval filters.

        Args:
            template_dir (Path): The directory containing Jinja2 templates.
        """
        self.environment = Environment(
            loader=FileSystemLoader(template_dir),
            trim_blocks=True,
            lstrip_blocks=True,
            keep_trailing_newline=True,
        )

        self.environment.filters["fmt"] = format_number
        self.environment.filters["pct"] = format_percent
        self.environment.filters["pval"] = format_p_value

    def render_template(self, template_name: str, context: Dict) -> str:
        """
        Renders a template with the given context.

        Args:
            template_name (str): The name of the template to render.
            context (Dict): The context to render the template with.

        Returns:
            str: The rendered template as a string.
        """
        template = self.environment.get_template(template_name)
        return template.render(context)

    def add_globals(self, values: Dict) -> None:
        """
        Adds global variables to the Jinja2 environment.

        Args:
            values (Dict): Names and values made available to every template.
        """
        self.environment.globals.update(values)


def format_number(value: Optional[float], digits: int = 3) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "n/a"
    return f"{value:.{digits}f}"


def format_percent(value: Optional[float]) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "n/a"
    return f"{100.0 * value:.1f}%"


def format_p_value(value: Optional[float]) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "n/a"
    if value <= 1e-5:
        return "<=1e-05"
    return f"{value:.2e}"
