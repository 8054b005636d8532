"""Domain exception types, grouped by the subsystem that raises them."""


class SalesimError(Exception):
    """Base class for all errors raised by this package."""


# --- model gateway ---------------------------------------------------------

class ProviderUnreachable(SalesimError):
    """Provider could not be reached (or a scripted provider ran dry)."""


class ProviderRefusal(SalesimError):
    """Provider answered with a non-retryable error."""


class EmptyCompletion(SalesimError):
    """Provider returned a blank completion."""


class DuplicateKey(SalesimError):
    """A scripted scenario declared the same match key twice."""


# --- content generation ----------------------------------------------------

class ParseFailure(SalesimError):
    """A completion or price string did not match the expected grammar."""


class InsufficientNames(SalesimError):
    """Fewer than the minimum number of product names after all attempts."""


class InvalidPrice(SalesimError):
    """Price parsed but is not a positive amount."""


class EmptyGuide(SalesimError):
    """Guide text contained no paragraphs."""


class WrongCount(SalesimError):
    """A generation stage produced the wrong number of items after retries."""


class InvalidOption(SalesimError):
    """A profile answer is not one of its question's options."""


class UnmappedAnswer(SalesimError):
    """No acceptability predicate is defined for an answered (qid, option)."""


# --- retrieval -------------------------------------------------------------

class EmptyText(SalesimError):
    """Cannot embed empty text."""


class DuplicateId(SalesimError):
    """Two index entries share an id."""


class EmptyIndex(SalesimError):
    """Search over an index with no entries."""


# --- actors ----------------------------------------------------------------

class UnannotatedProfile(SalesimError):
    """Profile has no ground-truth acceptable-product annotation."""


class UnparseableAction(SalesimError):
    """Action decision completion matched no known action label."""


class EmptyQuery(SalesimError):
    """Query generation produced an empty query."""


class MalformedRecommendationBlock(SalesimError):
    """Recommendation block missing, unparseable, or naming unknown ids."""


# --- orchestration ---------------------------------------------------------

class UnknownCategory(SalesimError):
    """No content elements loaded for the requested category."""


class UnknownProfile(SalesimError):
    """The requested preference profile does not exist."""


class NotBotTurn(SalesimError):
    """step() called when the next actor is not a bot."""


class TerminalState(SalesimError):
    """Conversation already reached a terminal status."""


class OutOfTurn(SalesimError):
    """A message or decision arrived out of turn or from the wrong actor."""


class NoPendingRecommendation(SalesimError):
    """Decision submitted while no recommendation is pending."""


class ReplayError(SalesimError):
    """Transcript record log violates conversation invariants."""


# --- evaluation ------------------------------------------------------------

class UnparseableJudgeAnswer(SalesimError):
    """A judge response could not be parsed into the expected answer."""
