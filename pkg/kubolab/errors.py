from typing import Any, Optional

# Errors raised inside spawned workers travel back to the parent by pickle; each
# class with extra state rebuilds itself from its constructor arguments.


class KubolabError(Exception):
	"""Base class for every error raised by kubolab."""


class ConfigurationError(KubolabError, ValueError):
	def __init__(self, message: str, field: Optional[str] = None) -> None:
		super().__init__(message)
		self.message = message
		self.field = field

	def __reduce__(self):
		return (type(self), (self.message, self.field))

	def __str__(self) -> str:
		if self.field:
			return f"{self.field}: {self.message}"
		return self.message


class InputError(KubolabError, ValueError):
	pass


class DomainError(KubolabError, ValueError):
	pass


class NumericalError(KubolabError, RuntimeError):
	def __init__(self, message: str, meta: Optional[dict[str, Any]] = None) -> None:
		super().__init__(message)
		self.message = message
		self.meta = dict(meta or {})

	def __reduce__(self):
		return (type(self), (self.message, self.meta))


class PartialResultError(KubolabError, RuntimeError):
	def __init__(self, message: str, failed_indices: list[int]) -> None:
		super().__init__(message)
		self.message = message
		self.failed_indices = sorted(failed_indices)

	def __reduce__(self):
		return (type(self), (self.message, self.failed_indices))


class CheckFailure(KubolabError):
	def __init__(self, message: str, report: Any = None) -> None:
		super().__init__(message)
		self.report = report
